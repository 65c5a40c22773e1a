//! Semidefinite relaxation of the discrete-phase design problem, rank
//! refinement, principal-component extraction, and the full design pipeline.
//!
//! The lifted variable is solved in normalized form `X = F / (P_t / M)` so
//! that the diagonal is all ones regardless of the power budget.

use std::f64::consts::PI;
use web_time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::hvec::{from_hvec, offdiag_functional, trace_functional};
use crate::conic::{self, Cone, ConicProgram, SolveStatus, SolverSettings, SparseRow};
use crate::error::{DesignError, ModelError};
use crate::evaluation::{mw_to_dbm, BeamWeights};
use crate::phase_codebook::{rotate_project, PhaseCodebook, Projection, DEFAULT_GRID_POINTS};
use crate::si_channel::ChannelMatrix;

/// One steering-direction instance of the design problem.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    a: DVector<Complex64>,
    channel: ChannelMatrix,
    p_t_mw: f64,
    p_max_mw: f64,
    codebook: PhaseCodebook,
}

impl DesignProblem {
    /// `p_max_mw` may be `f64::INFINITY` to drop the SI constraints.
    pub fn new(
        a: DVector<Complex64>,
        channel: ChannelMatrix,
        p_t_mw: f64,
        p_max_mw: f64,
        codebook: PhaseCodebook,
    ) -> Result<Self, ModelError> {
        let m = a.len();
        if m == 0 {
            return Err(ModelError::Dimension("array response is empty".into()));
        }
        if channel.num_tx() != m {
            return Err(ModelError::Dimension(format!(
                "response has {m} entries, channel has {} Tx columns",
                channel.num_tx()
            )));
        }
        if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ModelError::Parameter("array response must be finite".into()));
        }
        if !(p_t_mw > 0.0 && p_t_mw.is_finite()) {
            return Err(ModelError::Parameter(format!("P_t must be positive and finite, got {p_t_mw}")));
        }
        if !(p_max_mw > 0.0) {
            return Err(ModelError::Parameter(format!("P_max must be positive, got {p_max_mw}")));
        }
        let per = p_t_mw / m as f64;
        let amp2 = codebook.amplitude().powi(2);
        if (amp2 - per).abs() > 1e-9 * per {
            return Err(ModelError::Parameter(format!(
                "codebook amplitude^2 {amp2} differs from P_t/M = {per}"
            )));
        }
        Ok(Self { a, channel, p_t_mw, p_max_mw, codebook })
    }

    pub fn response(&self) -> &DVector<Complex64> {
        &self.a
    }

    pub fn channel(&self) -> &ChannelMatrix {
        &self.channel
    }

    pub fn codebook(&self) -> &PhaseCodebook {
        &self.codebook
    }

    pub fn p_t_mw(&self) -> f64 {
        self.p_t_mw
    }

    pub fn p_max_mw(&self) -> f64 {
        self.p_max_mw
    }

    pub fn num_tx(&self) -> usize {
        self.a.len()
    }

    pub fn num_rx(&self) -> usize {
        self.channel.num_rx()
    }

    /// Per-element power `P_t / M`.
    pub fn element_power(&self) -> f64 {
        self.p_t_mw / self.num_tx() as f64
    }

    /// Objective matrix `-a a^*`.
    pub fn objective_matrix(&self) -> DMatrix<Complex64> {
        -(&self.a * self.a.adjoint())
    }

    /// SI constraint matrices `H_n^* H_n`, one per receive antenna.
    pub fn constraint_matrices(&self) -> Vec<DMatrix<Complex64>> {
        (0..self.num_rx()).map(|n| self.channel.constraint_matrix(n)).collect()
    }
}

/// Rank-one cut `u^* F u >= delta tr(F)`.
#[derive(Debug, Clone)]
pub struct RankCut {
    pub direction: DVector<Complex64>,
    pub delta: f64,
}

/// Constraint bookkeeping of an assembled relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramCounts {
    pub equalities: usize,
    pub trace_inequalities: usize,
    pub polygon_inequalities: usize,
    pub cut_inequalities: usize,
    pub psd_order: usize,
}

impl ProgramCounts {
    /// Scalar constraints outside the PSD cone.
    pub fn scalar_constraints(&self) -> usize {
        self.equalities + self.trace_inequalities + self.polygon_inequalities + self.cut_inequalities
    }
}

/// A relaxation ready for the conic solver, in normalized units.
#[derive(Debug, Clone)]
pub struct RelaxedProgram {
    pub program: ConicProgram,
    pub counts: ProgramCounts,
    order: usize,
    /// `P_t / M`: multiply the normalized solution by this to get `F`.
    scale: f64,
}

/// The full relaxation: diagonal, SI, polygon, and PSD constraints.
pub fn assemble_p3(problem: &DesignProblem) -> RelaxedProgram {
    assemble_relaxation(problem, true, None)
}

/// Builds the relaxation, optionally without the polygon constraints and with one rank cut.
pub fn assemble_relaxation(problem: &DesignProblem, polygon: bool, cut: Option<&RankCut>) -> RelaxedProgram {
    let m = problem.num_tx();
    let e = problem.element_power();
    let d = m * m;
    let mut p = ConicProgram::new(d);
    for (j, v) in trace_functional(&problem.objective_matrix()) {
        p.objective[j] = v;
    }
    for i in 0..m {
        p.add_eq(vec![(i, 1.0)], 1.0);
    }
    let mut rows: Vec<SparseRow> = Vec::new();
    let mut rhs = Vec::new();
    let mut trace_inequalities = 0;
    if problem.p_max_mw().is_finite() {
        for c in problem.constraint_matrices() {
            let row: SparseRow = trace_functional(&c).into_iter().map(|(j, v)| (j, v * e)).collect();
            rows.push(row);
            rhs.push(problem.p_max_mw());
            trace_inequalities += 1;
        }
    }
    let mut polygon_inequalities = 0;
    if polygon {
        let k = problem.codebook().size();
        let offset = (PI / k as f64).cos();
        let normals = problem.codebook().hull(1.0).normals().to_vec();
        for q in 0..m {
            for pp in q + 1..m {
                for t in &normals {
                    rows.push(offdiag_functional(m, pp, q, *t).to_vec());
                    rhs.push(offset);
                    polygon_inequalities += 1;
                }
            }
        }
    }
    let mut cut_inequalities = 0;
    if let Some(cut) = cut {
        let u = &cut.direction;
        let uu = u * u.adjoint();
        // delta tr(X) - u^* X u <= 0
        let mut row: Vec<(usize, f64)> = trace_functional(&uu).into_iter().map(|(j, v)| (j, -v)).collect();
        for i in 0..m {
            match row.iter_mut().find(|(j, _)| *j == i) {
                Some(entry) => entry.1 += cut.delta,
                None => row.push((i, cut.delta)),
            }
        }
        rows.push(row);
        rhs.push(0.0);
        cut_inequalities = 1;
    }
    if !rows.is_empty() {
        let count = rows.len();
        p.add_cone(Cone::NonNegative(count), rows, rhs);
    }
    p.add_cone(Cone::HermitianPsd(m), (0..d).map(|j| vec![(j, -1.0)]).collect(), vec![0.0; d]);
    RelaxedProgram {
        program: p,
        counts: ProgramCounts {
            equalities: m,
            trace_inequalities,
            polygon_inequalities,
            cut_inequalities,
            psd_order: m,
        },
        order: m,
        scale: e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdStatus {
    Solved,
    Infeasible,
    NumericalFailure,
}

impl PsdStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PsdStatus::Solved => "solved",
            PsdStatus::Infeasible => "infeasible",
            PsdStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsdSolution {
    /// Lifted matrix in mW (`F`, not normalized).
    pub f: DMatrix<Complex64>,
    /// `tr(A F)`.
    pub objective: f64,
    pub status: PsdStatus,
    pub rank1_ratio: f64,
    pub solver_status: SolveStatus,
    pub iterations: usize,
}

/// `lambda_max / sum(lambda)` of a Hermitian PSD matrix.
pub fn rank1_ratio(f: &DMatrix<Complex64>) -> f64 {
    let eig = SymmetricEigen::new(f.clone()).eigenvalues;
    let total: f64 = eig.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / total
}

/// Dominant eigenpair of a Hermitian matrix; the vector has unit norm and the
/// first entry of non-negligible magnitude is real positive.
fn dominant_eigen(f: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let eig = SymmetricEigen::new(f.clone());
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let mut u: DVector<Complex64> = eig.eigenvectors.column(imax).into_owned();
    let peak = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if let Some(first) = u.iter().find(|v| v.norm() > 1e-9 * peak).copied() {
        let rot = first.conj() / first.norm();
        u *= rot;
    }
    (lmax, u)
}

/// Solves an assembled relaxation and maps the result back to mW units.
///
/// The solver output is rescaled congruently so that its diagonal is exact,
/// which preserves semidefiniteness.
pub fn solve_psd(relaxed: &RelaxedProgram, settings: &SolverSettings) -> Result<PsdSolution, DesignError> {
    let sol = conic::solve(&relaxed.program, settings).map_err(DesignError::NumericalFailure)?;
    let m = relaxed.order;
    let status = match sol.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => PsdStatus::Solved,
        SolveStatus::PrimalInfeasible => PsdStatus::Infeasible,
        SolveStatus::DualInfeasible | SolveStatus::NumericalFailure => PsdStatus::NumericalFailure,
    };
    let mut x = from_hvec(&sol.x, m);
    if status == PsdStatus::Solved {
        let d: Vec<f64> = (0..m).map(|i| x[(i, i)].re).collect();
        if d.iter().all(|v| *v > 0.0) {
            for j in 0..m {
                for i in 0..m {
                    x[(i, j)] /= (d[i] * d[j]).sqrt();
                }
            }
        }
    }
    let f = x * Complex64::new(relaxed.scale, 0.0);
    let objective = relaxed
        .program
        .objective
        .iter()
        .zip(crate::conic::hvec::to_hvec(&f))
        .map(|(c, v)| c * v)
        .sum();
    let ratio = if status == PsdStatus::Solved { rank1_ratio(&f) } else { 0.0 };
    Ok(PsdSolution { f, objective, status, rank1_ratio: ratio, solver_status: sol.status, iterations: sol.iterations })
}

/// Constraint residuals of a lifted matrix against the relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P3Residuals {
    /// Largest `|F_mm - P_t/M| / (P_t/M)`.
    pub diagonal_rel: f64,
    /// Largest `(tr(C_n F) - P_max) / P_max`; negative when all hold with margin.
    pub trace_excess_rel: f64,
    /// Largest `Re(t_k^* F_pq) - offset` over the strict lower triangle, in mW.
    pub polygon_excess: f64,
    /// Smallest eigenvalue of `F`.
    pub min_eigenvalue: f64,
}

pub fn p3_residuals(problem: &DesignProblem, f: &DMatrix<Complex64>) -> P3Residuals {
    let m = problem.num_tx();
    let e = problem.element_power();
    let diagonal_rel = (0..m).map(|i| (f[(i, i)].re - e).abs() / e).fold(0.0, f64::max);
    let trace_excess_rel = if problem.p_max_mw().is_finite() {
        problem
            .constraint_matrices()
            .iter()
            .map(|c| ((c * f).trace().re - problem.p_max_mw()) / problem.p_max_mw())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NEG_INFINITY
    };
    let hull = problem.codebook().hull(e);
    let mut polygon_excess = f64::NEG_INFINITY;
    for q in 0..m {
        for p in q + 1..m {
            for s in hull.slacks(f[(p, q)]) {
                polygon_excess = polygon_excess.max(-s);
            }
        }
    }
    let min_eigenvalue = SymmetricEigen::new(f.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    P3Residuals { diagonal_rel, trace_excess_rel, polygon_excess, min_eigenvalue }
}

/// Rank refinement schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub delta_step: f64,
    pub target_ratio: f64,
    pub max_iters: usize,
    /// Give up once repeated halving shrinks the step below this.
    pub min_step: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { delta_step: 0.1, target_ratio: 0.9999, max_iters: 50, min_step: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub solution: PsdSolution,
    /// Rank-one ratio of the start point and of every accepted iterate.
    pub trajectory: Vec<f64>,
    /// Number of re-solves performed.
    pub iterations: usize,
    pub solver_iterations: usize,
    pub reached_target: bool,
}

/// Raises the rank-one ratio of a relaxed solution by re-solving with a cut
/// along the current dominant eigenvector.
pub fn rank_refine(
    problem: &DesignProblem,
    start: &PsdSolution,
    params: &RefineParams,
    settings: &SolverSettings,
) -> Result<Refinement, DesignError> {
    refine_with(problem, start, params, settings, true)
}

pub(crate) fn refine_with(
    problem: &DesignProblem,
    start: &PsdSolution,
    params: &RefineParams,
    settings: &SolverSettings,
    polygon: bool,
) -> Result<Refinement, DesignError> {
    if start.status != PsdStatus::Solved {
        return Err(DesignError::NotSolved);
    }
    let mut current = start.clone();
    let mut trajectory = vec![current.rank1_ratio];
    let mut step = params.delta_step;
    let mut iterations = 0;
    let mut solver_iterations = 0;
    while current.rank1_ratio < params.target_ratio && iterations < params.max_iters && step >= params.min_step {
        let (_, u) = dominant_eigen(&current.f);
        // an accepted solve has ratio >= delta, so asking for more than the target is wasted
        let delta = (current.rank1_ratio + step).min(params.target_ratio);
        let cut = RankCut { direction: u, delta };
        let relaxed = assemble_relaxation(problem, polygon, Some(&cut));
        let next = solve_psd(&relaxed, settings)?;
        iterations += 1;
        solver_iterations += next.iterations;
        if next.status == PsdStatus::Solved && next.rank1_ratio >= current.rank1_ratio {
            trajectory.push(next.rank1_ratio);
            current = next;
        } else {
            step *= 0.5;
        }
    }
    let reached_target = current.rank1_ratio >= params.target_ratio;
    Ok(Refinement { solution: current, trajectory, iterations, solver_iterations, reached_target })
}

/// `sqrt(lambda_max) u_max`, with the first non-negligible entry real positive.
pub fn extract_principal(solution: &PsdSolution) -> Result<DVector<Complex64>, DesignError> {
    if solution.status != PsdStatus::Solved {
        return Err(DesignError::NotSolved);
    }
    let (lmax, u) = dominant_eigen(&solution.f);
    Ok(u * Complex64::new(lmax.max(0.0).sqrt(), 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub solver: SolverSettings,
    pub grid_points: usize,
    pub refine: RefineParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { solver: SolverSettings::default(), grid_points: DEFAULT_GRID_POINTS, refine: RefineParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    pub objective: f64,
    pub rank1_ratio_trajectory: Vec<f64>,
    pub beta_star: f64,
    pub pre_projection_max_si_dbm: f64,
    pub post_projection_max_si_dbm: f64,
    pub solver_status: String,
    /// Refinement re-solves.
    pub iterations: usize,
    /// Interior-point iterations over all solves.
    pub solver_iterations: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub weights: BeamWeights,
    pub diagnostics: DesignDiagnostics,
    pub relaxed: PsdSolution,
    pub principal: DVector<Complex64>,
    pub projection: Projection,
}

fn status_error(status: PsdStatus) -> DesignError {
    match status {
        PsdStatus::Infeasible => DesignError::Infeasible,
        _ => DesignError::NumericalFailure("conic solver did not converge".into()),
    }
}

/// Relax, refine, extract, then rotate and project onto the codebook.
pub fn design(problem: &DesignProblem, config: &PipelineConfig) -> Result<Design, DesignError> {
    let start = Instant::now();
    let first = solve_psd(&assemble_p3(problem), &config.solver)?;
    if first.status != PsdStatus::Solved {
        return Err(status_error(first.status));
    }
    let refined = rank_refine(problem, &first, &config.refine, &config.solver)?;
    let principal = extract_principal(&refined.solution)?;
    let projection = rotate_project(&principal, problem.codebook(), problem.channel(), config.grid_points)?;
    let pre = problem.channel().apply(&principal)?.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let diagnostics = DesignDiagnostics {
        objective: refined.solution.objective,
        rank1_ratio_trajectory: refined.trajectory.clone(),
        beta_star: projection.beta,
        pre_projection_max_si_dbm: mw_to_dbm(pre),
        post_projection_max_si_dbm: mw_to_dbm(projection.max_si_mw),
        solver_status: refined.solution.solver_status.as_str().to_string(),
        iterations: refined.iterations,
        solver_iterations: first.iterations + refined.solver_iterations,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(Design {
        weights: projection.weights.clone(),
        diagnostics,
        relaxed: refined.solution,
        principal,
        projection,
    })
}

/// Solves the relaxation without polygon constraints and refines it; shared with the sequential benchmark.
pub(crate) fn continuous_relaxation(problem: &DesignProblem, config: &PipelineConfig) -> Result<Refinement, DesignError> {
    let first = solve_psd(&assemble_relaxation(problem, false, None), &config.solver)?;
    if first.status != PsdStatus::Solved {
        return Err(status_error(first.status));
    }
    let mut out = refine_with(problem, &first, &config.refine, &config.solver, false)?;
    out.solver_iterations += first.iterations;
    Ok(out)
}
