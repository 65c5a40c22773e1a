use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ibfd_core::evaluation::{
    brute_force_oracle, dbm_to_mw, max_si_mw, rows_to_csv, run_designer, sweep, DesignerRun, SweepRow, SweepSpec,
};
use ibfd_core::sdr_designer::DesignDiagnostics;
use ibfd_core::si_channel::{load_channel, save_channel, synth_coupling, synth_coupling_with_scatter};
use ibfd_core::{
    array_response, build_planar_array, evaluation::bf_gain, ArrayGeometry, BeamWeights, ChannelMatrix, DesignError,
    DesignProblem, EvalReport, PhaseCodebook, SteeringDirection, Subarray,
};
use serde::Serialize;

use crate::config::{ChannelSpec, RunConfig};

/// Process exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// At least one designer or the oracle found no feasible point.
    Infeasible,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Infeasible => 2,
        }
    }
}

pub fn geometry(cfg: &RunConfig) -> Result<ArrayGeometry> {
    let g = &cfg.geometry;
    Ok(build_planar_array(g.rows, g.cols, g.spacing_wl, &g.partition)?)
}

pub fn channel(cfg: &RunConfig, geom: &ArrayGeometry) -> Result<ChannelMatrix> {
    let h = match &cfg.channel {
        ChannelSpec::Synthetic { reference_coupling_db, scatter_db: None } => synth_coupling(geom, *reference_coupling_db)?,
        ChannelSpec::Synthetic { reference_coupling_db, scatter_db: Some(s) } => {
            synth_coupling_with_scatter(geom, *reference_coupling_db, *s, cfg.seed)?
        }
        ChannelSpec::File { path } => {
            let file = std::fs::File::open(path).with_context(|| format!("opening channel {}", path.display()))?;
            load_channel(BufReader::new(file)).with_context(|| format!("reading channel {}", path.display()))?
        }
    };
    if h.num_rx() != geom.num_rx() || h.num_tx() != geom.num_tx() {
        bail!(
            "channel is {}x{} but the geometry has N = {} receive and M = {} transmit elements",
            h.num_rx(),
            h.num_tx(),
            geom.num_rx(),
            geom.num_tx()
        );
    }
    Ok(h)
}

fn p_max_mw(cfg: &RunConfig) -> f64 {
    cfg.pmax_dbm.map_or(f64::INFINITY, dbm_to_mw)
}

fn problem(cfg: &RunConfig, geom: &ArrayGeometry, h: &ChannelMatrix, dir: &SteeringDirection) -> Result<DesignProblem> {
    let p_t = dbm_to_mw(cfg.pt_dbm);
    let cb = PhaseCodebook::for_power(cfg.bits, p_t, geom.num_tx())?;
    let a = array_response(geom, Subarray::Tx, dir);
    Ok(DesignProblem::new(a, h.clone(), p_t, p_max_mw(cfg), cb)?)
}

/// Writes to `path` through a temporary file in the same directory, or to stdout.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

pub fn gen_channel(cfg: &RunConfig) -> Result<Outcome> {
    let geom = geometry(cfg)?;
    let h = channel(cfg, &geom)?;
    let mut buf = Vec::new();
    save_channel(&h, &mut buf)?;
    write_output(cfg.out.as_deref(), &buf)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WeightsJson {
    Quantized { bits: u32, phase_indices: Vec<usize> },
    Continuous { re: Vec<f64>, im: Vec<f64> },
}

impl WeightsJson {
    fn new(w: &BeamWeights) -> Self {
        match w.phase_indices() {
            Some(idx) => {
                let bits = match w.kind() {
                    ibfd_core::evaluation::BeamKind::Quantized { bits, .. } => *bits,
                    ibfd_core::evaluation::BeamKind::Continuous => unreachable!(),
                };
                WeightsJson::Quantized { bits, phase_indices: idx.to_vec() }
            }
            None => WeightsJson::Continuous {
                re: w.weights().iter().map(|v| v.re).collect(),
                im: w.weights().iter().map(|v| v.im).collect(),
            },
        }
    }
}

#[derive(Serialize)]
struct DesignerJson {
    designer: &'static str,
    status: String,
    weights: Option<WeightsJson>,
    report: Option<EvalReport>,
    beta_star_rad: Option<f64>,
    diagnostics: Option<DesignDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

impl DesignerJson {
    fn new(run: &DesignerRun, timing: bool) -> Self {
        Self {
            designer: run.designer.name(),
            status: run.solver_status.clone(),
            weights: run.weights.as_ref().map(WeightsJson::new),
            report: run.report.clone(),
            beta_star_rad: run.beta_star,
            diagnostics: run.diagnostics.clone(),
            wall_time_ms: timing.then_some(run.wall_time_ms),
        }
    }
}

#[derive(Serialize)]
struct DesignJson<'a> {
    config: &'a RunConfig,
    results: Vec<DesignerJson>,
}

fn outcome_of(statuses: impl IntoIterator<Item = String>) -> Result<Outcome> {
    let mut outcome = Outcome::Success;
    for s in statuses {
        match s.as_str() {
            "solved" => {}
            "infeasible" => outcome = Outcome::Infeasible,
            other => bail!("designer finished with status {other}"),
        }
    }
    Ok(outcome)
}

pub fn design(cfg: &RunConfig) -> Result<Outcome> {
    let geom = geometry(cfg)?;
    let h = channel(cfg, &geom)?;
    let dir = SteeringDirection::from_degrees(cfg.direction.theta_deg, cfg.direction.phi_deg)?;
    let p = problem(cfg, &geom, &h, &dir)?;
    let pipeline = cfg.pipeline();
    let runs: Vec<DesignerRun> = cfg.designers.iter().map(|&d| run_designer(d, &p, &pipeline, dir)).collect();
    let doc = DesignJson { config: cfg, results: runs.iter().map(|r| DesignerJson::new(r, cfg.timing)).collect() };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(cfg.out.as_deref(), text.as_bytes())?;
    outcome_of(runs.into_iter().map(|r| r.solver_status))
}

/// Per-designer summary line of a sweep.
pub fn sweep_summary(rows: &[SweepRow]) -> Vec<String> {
    let mut names: Vec<&'static str> = rows.iter().map(|r| r.run.designer.name()).collect();
    names.sort_unstable();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let runs: Vec<&DesignerRun> = rows.iter().map(|r| &r.run).filter(|r| r.designer.name() == name).collect();
            let reports: Vec<&EvalReport> = runs.iter().filter_map(|r| r.report.as_ref()).collect();
            let infeasible = runs.iter().filter(|r| r.solver_status == "infeasible").count();
            let failed = runs.len() - reports.len() - infeasible;
            let stats = if reports.is_empty() {
                "mean gain n/a worst max SI n/a".to_string()
            } else {
                let mean_gain = reports.iter().map(|r| r.gain_db).sum::<f64>() / reports.len() as f64;
                let worst = reports.iter().map(|r| r.max_si_dbm).fold(f64::NEG_INFINITY, f64::max);
                format!("mean gain {mean_gain:.3} dB worst max SI {worst:.3} dBm")
            };
            format!("{name}: cells {} {stats} infeasible {infeasible} failed {failed}", runs.len())
        })
        .collect()
}

pub fn sweep_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let Some(out) = cfg.out.as_deref() else { bail!("sweep needs --out for the CSV file") };
    let geom = geometry(cfg)?;
    let h = channel(cfg, &geom)?;
    let spec = SweepSpec {
        geometry: &geom,
        channel: &h,
        bits: cfg.bits,
        p_t_mw: dbm_to_mw(cfg.pt_dbm),
        p_max_mw: p_max_mw(cfg),
        theta_deg: cfg.grid.theta_deg.clone(),
        phi_deg: cfg.grid.phi_deg.clone(),
        designers: cfg.designers.clone(),
        config: cfg.pipeline(),
    };
    let rows = sweep(&spec)?;
    write_output(Some(out), rows_to_csv(&rows, geom.num_rx(), cfg.timing).as_bytes())?;
    for line in sweep_summary(&rows) {
        println!("{line}");
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct OracleBest {
    phase_indices: Vec<usize>,
    gain_db: f64,
    max_si_dbm: f64,
}

#[derive(Serialize)]
struct GapJson {
    designer: &'static str,
    status: String,
    gain_db: Option<f64>,
    max_si_dbm: Option<f64>,
    /// Oracle gain minus designer gain.
    gap_db: Option<f64>,
}

#[derive(Serialize)]
struct OracleJson<'a> {
    config: &'a RunConfig,
    enumerated: u64,
    feasible_count: u64,
    best: Option<OracleBest>,
    gaps: Vec<GapJson>,
}

pub fn oracle(cfg: &RunConfig) -> Result<Outcome> {
    let geom = geometry(cfg)?;
    let h = channel(cfg, &geom)?;
    let dir = SteeringDirection::from_degrees(cfg.direction.theta_deg, cfg.direction.phi_deg)?;
    let p = problem(cfg, &geom, &h, &dir)?;
    let res = match brute_force_oracle(&p, cfg.oracle_cap) {
        Ok(r) => r,
        Err(e @ DesignError::CapExceeded { .. }) => bail!("oracle refused: {e}"),
        Err(e) => return Err(e.into()),
    };
    let best = match (&res.best, res.best_gain_db) {
        (Some(w), Some(g)) => Some(OracleBest {
            phase_indices: w.phase_indices().map(<[usize]>::to_vec).unwrap_or_default(),
            gain_db: g,
            max_si_dbm: ibfd_core::evaluation::mw_to_dbm(max_si_mw(w, &h)?),
        }),
        _ => None,
    };
    let pipeline = cfg.pipeline();
    let gaps = cfg
        .designers
        .iter()
        .map(|&d| {
            let run = run_designer(d, &p, &pipeline, dir);
            let gain = run.weights.as_ref().map(|w| bf_gain(w, p.response())).transpose()?;
            Ok(GapJson {
                designer: d.name(),
                status: run.solver_status.clone(),
                gain_db: gain,
                max_si_dbm: run.report.as_ref().map(|r| r.max_si_dbm),
                gap_db: match (res.best_gain_db, gain) {
                    (Some(o), Some(g)) => Some(o - g),
                    _ => None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = if best.is_some() { Outcome::Success } else { Outcome::Infeasible };
    let doc = OracleJson { config: cfg, enumerated: res.enumerated, feasible_count: res.feasible_count, best, gaps };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(cfg.out.as_deref(), text.as_bytes())?;
    Ok(outcome)
}
