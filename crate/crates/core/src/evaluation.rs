//! Beamforming metrics, the brute-force discrete oracle, and steering sweeps.
//!
//! Powers are carried in mW internally and reported in dBm (reference 1 mW).
//! Zero powers report as [`DB_FLOOR`] instead of `-inf`.

use std::fmt::Write as _;
use web_time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{array_response, cbf_weights, ArrayGeometry, SteeringDirection, Subarray};
use crate::benchmarks::{digital_design, quantized_cbf, sequential_design};
use crate::error::{DesignError, ModelError};
use crate::phase_codebook::PhaseCodebook;
use crate::sdr_designer::{design, DesignProblem, PipelineConfig};
use crate::si_channel::ChannelMatrix;

/// Sentinel for the dB value of a zero power.
pub const DB_FLOOR: f64 = -300.0;

/// Default enumeration budget of the oracle, in candidates.
pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

/// `10 log10(x)` with the floor for nonpositive input.
pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    to_db(mw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BeamKind {
    Continuous,
    /// Codebook-valued; `indices[m]` selects the phase of element `m`.
    Quantized { bits: u32, indices: Vec<usize> },
}

/// A length-M Tx weight vector in sqrt(mW).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    weights: DVector<Complex64>,
    kind: BeamKind,
}

impl BeamWeights {
    pub fn continuous(weights: DVector<Complex64>) -> Self {
        Self { weights, kind: BeamKind::Continuous }
    }

    pub fn quantized(codebook: &PhaseCodebook, indices: Vec<usize>) -> Self {
        let weights = DVector::from_iterator(indices.len(), indices.iter().map(|&k| codebook.point(k)));
        Self { weights, kind: BeamKind::Quantized { bits: codebook.bits(), indices } }
    }

    pub fn weights(&self) -> &DVector<Complex64> {
        &self.weights
    }

    pub fn kind(&self) -> &BeamKind {
        &self.kind
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.kind, BeamKind::Quantized { .. })
    }

    pub fn phase_indices(&self) -> Option<&[usize]> {
        match &self.kind {
            BeamKind::Quantized { indices, .. } => Some(indices),
            BeamKind::Continuous => None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `||f||^2` in mW.
    pub fn total_power(&self) -> f64 {
        self.weights.norm_squared()
    }

    /// Rotates every weight by `exp(j angle)`; the result is continuous.
    pub fn rotated(&self, angle: f64) -> Self {
        let r = Complex64::from_polar(1.0, angle);
        Self::continuous(self.weights.map(|v| v * r))
    }
}

/// Linear gain `|a^* f|^2 / ||f||^2`.
pub fn bf_gain_linear(f: &BeamWeights, a: &DVector<Complex64>) -> Result<f64, ModelError> {
    if f.len() != a.len() {
        return Err(ModelError::Dimension(format!(
            "weights have length {}, response has length {}",
            f.len(),
            a.len()
        )));
    }
    let power = f.total_power();
    if power <= 0.0 {
        return Err(ModelError::Parameter("zero weight vector".into()));
    }
    Ok(a.dotc(f.weights()).norm_sqr() / power)
}

/// Beamforming gain toward `a`, in dB.
pub fn bf_gain(f: &BeamWeights, a: &DVector<Complex64>) -> Result<f64, ModelError> {
    bf_gain_linear(f, a).map(to_db)
}

/// `|H_n f|^2` for every Rx antenna, in mW.
pub fn si_power_per_antenna_mw(f: &BeamWeights, h: &ChannelMatrix) -> Result<Vec<f64>, ModelError> {
    Ok(h.apply(f.weights())?.iter().map(|v| v.norm_sqr()).collect())
}

/// Per-antenna SI power in dBm.
pub fn si_power_per_antenna(f: &BeamWeights, h: &ChannelMatrix) -> Result<Vec<f64>, ModelError> {
    Ok(si_power_per_antenna_mw(f, h)?.into_iter().map(mw_to_dbm).collect())
}

/// Largest per-antenna SI in mW (0 when there are no Rx antennas).
pub fn max_si_mw(f: &BeamWeights, h: &ChannelMatrix) -> Result<f64, ModelError> {
    Ok(si_power_per_antenna_mw(f, h)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gain_db: f64,
    pub si_per_antenna_dbm: Vec<f64>,
    pub max_si_dbm: f64,
    pub feasible: bool,
    pub direction: SteeringDirection,
}

impl EvalReport {
    pub fn new(
        f: &BeamWeights,
        a: &DVector<Complex64>,
        h: &ChannelMatrix,
        p_max_mw: f64,
        direction: SteeringDirection,
    ) -> Result<Self, ModelError> {
        let gain_db = bf_gain(f, a)?;
        let si_mw = si_power_per_antenna_mw(f, h)?;
        let max_mw = si_mw.iter().cloned().fold(0.0, f64::max);
        let si_per_antenna_dbm: Vec<f64> = si_mw.into_iter().map(mw_to_dbm).collect();
        let max_si_dbm = si_per_antenna_dbm.iter().cloned().fold(DB_FLOOR, f64::max);
        Ok(Self { gain_db, si_per_antenna_dbm, max_si_dbm, feasible: max_mw <= p_max_mw, direction })
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best: Option<BeamWeights>,
    pub best_gain_db: Option<f64>,
    /// Feasible candidates among the enumerated ones (first element fixed at index 0).
    pub feasible_count: u64,
    pub enumerated: u64,
}

/// Number of candidates the oracle visits, `K^(M-1)`, or `None` on overflow.
pub fn oracle_candidates(k: usize, m: usize) -> Option<u64> {
    (k as u64).checked_pow(m.saturating_sub(1) as u32)
}

/// Exhaustive search over codebook vectors with the first phase fixed to `v_1`.
///
/// Returns the feasible (max SI <= P_max) maximizer of gain; among equal gains
/// the lexicographically smallest index tuple wins.
pub fn brute_force_oracle(problem: &DesignProblem, cap: u64) -> Result<OracleResult, DesignError> {
    let codebook = problem.codebook();
    let k = codebook.size();
    let m = problem.num_tx();
    let required = oracle_candidates(k, m);
    match required {
        Some(r) if r <= cap => {}
        _ => {
            let text = match required {
                Some(r) => r.to_string(),
                None => format!("{k}^{} (overflows u64)", m - 1),
            };
            return Err(DesignError::CapExceeded { required: text, cap });
        }
    }

    let h = problem.channel().entries();
    let a = problem.response();
    let n = h.nrows();
    let points: Vec<Complex64> = (0..k).map(|i| codebook.point(i)).collect();
    // contribution of element j at setting i: to a^* f and to every row of H f
    let gain_terms: Vec<Vec<Complex64>> =
        (0..m).map(|j| points.iter().map(|p| a[j].conj() * p).collect()).collect();
    let si_terms: Vec<Vec<Vec<Complex64>>> = (0..m)
        .map(|j| points.iter().map(|p| (0..n).map(|r| h[(r, j)] * p).collect()).collect())
        .collect();

    let p_t = problem.p_t_mw();
    let p_max = problem.p_max_mw();
    let mut idx = vec![0usize; m];
    let full_sums = |idx: &[usize]| -> (Complex64, Vec<Complex64>) {
        let af = (0..m).map(|j| gain_terms[j][idx[j]]).sum();
        let hf = (0..n).map(|r| (0..m).map(|j| si_terms[j][idx[j]][r]).sum()).collect();
        (af, hf)
    };
    let (mut af, mut hf) = full_sums(&idx);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut feasible_count = 0u64;
    let mut enumerated = 0u64;
    'enumerate: loop {
        enumerated += 1;
        let si = hf.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if si <= p_max {
            feasible_count += 1;
            let g = af.norm_sqr() / p_t;
            if best.as_ref().is_none_or(|(bg, _)| g > *bg) {
                best = Some((g, idx.clone()));
            }
        }
        // odometer over elements 1..m with the last element fastest, which
        // visits tuples in lexicographic order
        let mut pos = m - 1;
        loop {
            if pos == 0 {
                break 'enumerate;
            }
            let old = idx[pos];
            if old + 1 < k {
                idx[pos] = old + 1;
                af += gain_terms[pos][old + 1] - gain_terms[pos][old];
                for (r, v) in hf.iter_mut().enumerate() {
                    *v += si_terms[pos][old + 1][r] - si_terms[pos][old][r];
                }
                break;
            }
            idx[pos] = 0;
            pos -= 1;
        }
        if pos < m - 1 {
            // a carry happened; resync to keep rounding drift bounded
            (af, hf) = full_sums(&idx);
        }
    }

    let (best, best_gain_db) = match best {
        Some((g, indices)) => (Some(BeamWeights::quantized(codebook, indices)), Some(to_db(g))),
        None => (None, None),
    };
    Ok(OracleResult { best, best_gain_db, feasible_count, enumerated })
}

/// Available designers, in the order their names sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Designer {
    Cbf,
    Digital,
    Proposed,
    QuantizedCbf,
    Sequential,
}

impl Designer {
    pub const ALL: [Designer; 5] =
        [Designer::Cbf, Designer::Digital, Designer::Proposed, Designer::QuantizedCbf, Designer::Sequential];

    pub fn name(&self) -> &'static str {
        match self {
            Designer::Cbf => "cbf",
            Designer::Digital => "digital",
            Designer::Proposed => "proposed",
            Designer::QuantizedCbf => "quantized_cbf",
            Designer::Sequential => "sequential",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ModelError> {
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.name() == name.trim())
            .ok_or_else(|| ModelError::Parameter(format!("unknown designer {name:?}")))
    }
}

/// Outcome of running one designer on one problem.
#[derive(Debug, Clone)]
pub struct DesignerRun {
    pub designer: Designer,
    pub weights: Option<BeamWeights>,
    pub report: Option<EvalReport>,
    pub solver_status: String,
    pub beta_star: Option<f64>,
    pub diagnostics: Option<crate::sdr_designer::DesignDiagnostics>,
    pub wall_time_ms: f64,
}

impl DesignerRun {
    pub fn solved(&self) -> bool {
        self.weights.is_some()
    }
}

/// Runs a designer and evaluates its output. Failures become status strings.
pub fn run_designer(
    designer: Designer,
    problem: &DesignProblem,
    config: &PipelineConfig,
    direction: SteeringDirection,
) -> DesignerRun {
    let start = Instant::now();
    let mut beta_star = None;
    let mut diagnostics = None;
    let outcome: Result<BeamWeights, DesignError> = match designer {
        Designer::Cbf => cbf_weights(problem.response(), problem.p_t_mw()).map_err(Into::into),
        Designer::QuantizedCbf => quantized_cbf(problem),
        Designer::Digital => digital_design(problem, &config.solver),
        Designer::Sequential => sequential_design(problem, config),
        Designer::Proposed => design(problem, config).map(|d| {
            beta_star = Some(d.diagnostics.beta_star);
            diagnostics = Some(d.diagnostics.clone());
            d.weights
        }),
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(w) => {
            let report =
                EvalReport::new(&w, problem.response(), problem.channel(), problem.p_max_mw(), direction)
                    .ok();
            DesignerRun {
                designer,
                weights: Some(w),
                report,
                solver_status: "solved".into(),
                beta_star,
                diagnostics,
                wall_time_ms,
            }
        }
        Err(e) => DesignerRun {
            designer,
            weights: None,
            report: None,
            solver_status: match e {
                DesignError::Infeasible => "infeasible".into(),
                DesignError::NumericalFailure(_) => "numerical_failure".into(),
                _ => "error".into(),
            },
            beta_star: None,
            diagnostics: None,
            wall_time_ms,
        },
    }
}

/// Inputs of a steering sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub geometry: &'a ArrayGeometry,
    pub channel: &'a ChannelMatrix,
    pub bits: u32,
    pub p_t_mw: f64,
    pub p_max_mw: f64,
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    pub designers: Vec<Designer>,
    pub config: PipelineConfig,
}

/// Default elevation grid: 0 to 40 degrees in 5 degree steps.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=8).map(|i| 5.0 * i as f64).collect()
}

/// Default azimuth grid: 0 to 180 degrees in 15 degree steps.
pub fn default_phi_grid() -> Vec<f64> {
    (0..=12).map(|i| 15.0 * i as f64).collect()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub run: DesignerRun,
}

/// Runs every designer at every grid direction, cells in parallel when the
/// `parallel` feature is on. Rows come out theta-major,
/// then phi, then designer name; failures are kept as rows.
pub fn sweep(spec: &SweepSpec<'_>) -> Result<Vec<SweepRow>, ModelError> {
    if spec.theta_deg.is_empty() || spec.phi_deg.is_empty() || spec.designers.is_empty() {
        return Err(ModelError::Parameter("sweep grids and designer list must be nonempty".into()));
    }
    let mut designers = spec.designers.clone();
    designers.sort();
    designers.dedup();
    let codebook = PhaseCodebook::for_power(spec.bits, spec.p_t_mw, spec.geometry.num_tx())?;
    let cells: Vec<(f64, f64)> =
        spec.theta_deg.iter().flat_map(|&t| spec.phi_deg.iter().map(move |&p| (t, p))).collect();
    let run_cell = |&(theta, phi): &(f64, f64)| -> Result<Vec<SweepRow>, ModelError> {
        let direction = SteeringDirection::from_degrees(theta, phi)?;
        let a = array_response(spec.geometry, Subarray::Tx, &direction);
        let problem = DesignProblem::new(a, spec.channel.clone(), spec.p_t_mw, spec.p_max_mw, codebook)?;
        Ok(designers
            .iter()
            .map(|&d| SweepRow { theta_deg: theta, phi_deg: phi, run: run_designer(d, &problem, &spec.config, direction) })
            .collect())
    };
    #[cfg(feature = "parallel")]
    let per_cell: Vec<Result<Vec<SweepRow>, ModelError>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_cell: Vec<Result<Vec<SweepRow>, ModelError>> = cells.iter().map(run_cell).collect();
    let mut rows = Vec::with_capacity(cells.len() * designers.len());
    for cell in per_cell {
        rows.extend(cell?);
    }
    Ok(rows)
}

/// CSV header for `num_rx` receive antennas.
pub fn csv_header(num_rx: usize) -> String {
    let mut h = String::from(
        "direction_theta_deg,direction_phi_deg,designer,gain_db,max_si_dbm,feasible,solver_status,beta_star_rad,wall_time_ms",
    );
    for n in 1..=num_rx {
        write!(h, ",si_dbm_{n}").unwrap();
    }
    h
}

/// Renders sweep rows as CSV. Wall time is only written when `with_timing`
/// is set so that repeated runs produce identical files.
pub fn rows_to_csv(rows: &[SweepRow], num_rx: usize, with_timing: bool) -> String {
    let mut out = csv_header(num_rx);
    out.push('\n');
    for row in rows {
        let r = &row.run;
        let (gain, max_si, feasible, si): (String, String, String, Vec<String>) = match &r.report {
            Some(rep) => (
                format!("{:.6}", rep.gain_db),
                format!("{:.6}", rep.max_si_dbm),
                rep.feasible.to_string(),
                rep.si_per_antenna_dbm.iter().map(|v| format!("{v:.6}")).collect(),
            ),
            None => (String::new(), String::new(), "false".into(), vec![String::new(); num_rx]),
        };
        let beta = r.beta_star.map(|b| format!("{b:.9}")).unwrap_or_default();
        let wall = if with_timing { format!("{:.3}", r.wall_time_ms) } else { String::new() };
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.theta_deg,
            row.phi_deg,
            r.designer.name(),
            gain,
            max_si,
            feasible,
            r.solver_status,
            beta,
            wall
        )
        .unwrap();
        for v in si {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn unit_conversions() {
        assert_eq!(dbm_to_mw(30.0), 1000.0);
        assert_eq!(mw_to_dbm(1000.0), 30.0);
        assert_eq!(to_db(0.0), DB_FLOOR);
    }

    #[test]
    fn gain_examples() {
        let a = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let orth = BeamWeights::continuous(DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]));
        assert_eq!(bf_gain(&orth, &a).unwrap(), DB_FLOOR);
        let zero = BeamWeights::continuous(DVector::zeros(2));
        assert!(bf_gain(&zero, &a).is_err());
        let f = BeamWeights::continuous(DVector::from_vec(vec![
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.5, 1.0),
        ]));
        let g0 = bf_gain(&f, &a).unwrap();
        assert!((bf_gain(&f.rotated(1.234), &a).unwrap() - g0).abs() < 1e-12);
    }

    #[test]
    fn si_examples() {
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, Complex64::new(0.1, 0.0))).unwrap();
        let f = BeamWeights::continuous(DVector::from_element(1, Complex64::new(1000f64.sqrt(), 0.0)));
        let si = si_power_per_antenna(&f, &h).unwrap();
        assert!((si[0] - 10.0).abs() < 1e-12);

        let h2 = ChannelMatrix::new(DMatrix::from_row_slice(
            1,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
        ))
        .unwrap();
        let null = BeamWeights::continuous(DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ]));
        assert_eq!(si_power_per_antenna(&null, &h2).unwrap()[0], DB_FLOOR);
        let short = BeamWeights::continuous(DVector::zeros(3));
        assert!(si_power_per_antenna(&short, &h2).is_err());
    }

    #[test]
    fn csv_header_contract() {
        assert_eq!(
            csv_header(2),
            "direction_theta_deg,direction_phi_deg,designer,gain_db,max_si_dbm,feasible,solver_status,beta_star_rad,wall_time_ms,si_dbm_1,si_dbm_2"
        );
    }

    #[test]
    fn designer_names() {
        for d in Designer::ALL {
            assert_eq!(Designer::parse(d.name()).unwrap(), d);
        }
        assert!(Designer::parse("ga").is_err());
        let mut names: Vec<&str> = Designer::ALL.iter().map(|d| d.name()).collect();
        let sorted = { let mut s = names.clone(); s.sort(); s };
        assert_eq!(names, sorted);
        names.clear();
    }
}
