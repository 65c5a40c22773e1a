//! Small dense primal-dual interior-point solver for linear, second-order and
//! Hermitian semidefinite cone programs.
//!
//! Problems take the form
//!
//! ```text
//! minimize    c^T x
//! subject to  A x = b
//!             G x + s = h,   s in K
//! ```
//!
//! where `K` is a product of cones listed in order. Hermitian PSD blocks use
//! the coordinates of [`hvec`].

mod cones;
pub mod hvec;
mod ipm;

use serde::{Deserialize, Serialize};

/// Sparse row: `(column, coefficient)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// `dim` nonnegative coordinates.
    NonNegative(usize),
    /// `(t, u)` with `||u|| <= t`; `dim` counts `t`.
    SecondOrder(usize),
    /// `n x n` Hermitian PSD matrices, `n^2` coordinates.
    HermitianPsd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNegative(d) | Cone::SecondOrder(d) => d,
            Cone::HermitianPsd(n) => n * n,
        }
    }

    /// Degree of the cone (contribution to the barrier parameter).
    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNegative(d) => d,
            Cone::SecondOrder(_) => 1,
            Cone::HermitianPsd(n) => n,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    pub cone_rows: Vec<SparseRow>,
    pub cone_rhs: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, objective: vec![0.0; num_vars], ..Default::default() }
    }

    pub fn add_eq(&mut self, row: SparseRow, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    /// Appends one cone block whose slack is `h - G x`.
    pub fn add_cone(&mut self, cone: Cone, rows: Vec<SparseRow>, rhs: Vec<f64>) {
        assert_eq!(rows.len(), cone.dim(), "cone block row count");
        assert_eq!(rhs.len(), cone.dim(), "cone block rhs length");
        self.cone_rows.extend(rows);
        self.cone_rhs.extend(rhs);
        self.cones.push(cone);
    }

    fn validate(&self) -> Result<(), String> {
        if self.objective.len() != self.num_vars {
            return Err("objective length differs from variable count".into());
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.cone_rows.len() != self.cone_rhs.len() {
            return Err("row and rhs counts differ".into());
        }
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != self.cone_rows.len() {
            return Err("cone dimensions do not cover the cone rows".into());
        }
        if self.cones.is_empty() {
            return Err("at least one cone block is required".into());
        }
        for row in self.eq_rows.iter().chain(&self.cone_rows) {
            if row.iter().any(|&(j, v)| j >= self.num_vars || !v.is_finite()) {
                return Err("row references an unknown variable or non-finite coefficient".into());
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.eq_rhs) || !finite(&self.cone_rhs) {
            return Err("non-finite problem data".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Primal and dual residual tolerance (relative).
    pub feas_tol: f64,
    /// Absolute duality gap tolerance.
    pub abs_tol: f64,
    /// Relative duality gap tolerance.
    pub rel_tol: f64,
    /// Looser tolerances accepted when progress stalls.
    pub reduced_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
    /// Rescale rows before solving.
    pub equilibrate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            reduced_tol: 1e-5,
            max_iters: 100,
            step_fraction: 0.99,
            equilibrate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Met the reduced tolerances only.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    /// Iteration limit or breakdown without a usable point.
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::AlmostOptimal => "almost_optimal",
            SolveStatus::PrimalInfeasible => "primal_infeasible",
            SolveStatus::DualInfeasible => "dual_infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution, String> {
    program.validate()?;
    Ok(ipm::solve(program, settings))
}

#[cfg(test)]
mod tests {
    use super::hvec::{from_hvec, offdiag_index};
    use super::*;

    #[test]
    fn tiny_lp() {
        // min -x0 - x1  s.t. x0 + 2 x1 <= 4, 3 x0 + x1 <= 6, x >= 0  -> (1.6, 1.2)
        let mut p = ConicProgram::new(2);
        p.objective = vec![-1.0, -1.0];
        p.add_cone(
            Cone::NonNegative(4),
            vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 3.0), (1, 1.0)], vec![(0, -1.0)], vec![(1, -1.0)]],
            vec![4.0, 6.0, 0.0, 0.0],
        );
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.6).abs() < 1e-6 && (sol.x[1] - 1.2).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.primal_objective + 2.8).abs() < 1e-7);
    }

    #[test]
    fn lp_with_equality() {
        // min x0 + 2 x1 + 3 x2 s.t. x0 + x1 + x2 = 1, x >= 0  -> x0 = 1
        let mut p = ConicProgram::new(3);
        p.objective = vec![1.0, 2.0, 3.0];
        p.add_eq(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0);
        p.add_cone(Cone::NonNegative(3), (0..3).map(|j| vec![(j, -1.0)]).collect(), vec![0.0; 3]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.dual_objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn small_socp() {
        // max x0 + x1 s.t. ||(x0, x1)|| <= 1  -> both 1/sqrt2
        let mut p = ConicProgram::new(2);
        p.objective = vec![-1.0, -1.0];
        p.add_cone(Cone::SecondOrder(3), vec![vec![], vec![(0, -1.0)], vec![(1, -1.0)]], vec![1.0, 0.0, 0.0]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((sol.x[0] - r).abs() < 1e-6 && (sol.x[1] - r).abs() < 1e-6);
    }

    #[test]
    fn two_by_two_sdp() {
        // max Re tr(a a^* F), a = (1, 1), diag F = 1, F psd  ->  F = ones, value 4
        let n = 2;
        let mut p = ConicProgram::new(4);
        let k = offdiag_index(n, 1, 0);
        // tr(aa^* F) = F00 + F11 + 2 Re F10 = x0 + x1 + sqrt2 x_k
        p.objective[0] = -1.0;
        p.objective[1] = -1.0;
        p.objective[k] = -std::f64::consts::SQRT_2;
        p.add_eq(vec![(0, 1.0)], 1.0);
        p.add_eq(vec![(1, 1.0)], 1.0);
        p.add_cone(Cone::HermitianPsd(n), (0..4).map(|j| vec![(j, -1.0)]).collect(), vec![0.0; 4]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_objective + 4.0).abs() < 1e-6);
        let f = from_hvec(&sol.x, n);
        assert!((f[(1, 0)].re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn complex_sdp_phase() {
        // max Re tr(a a^* F) with a = (1, e^{j0.7}); optimum F10 = e^{j0.7}
        let n = 2;
        let k = offdiag_index(n, 1, 0);
        let t = num_complex::Complex64::from_polar(1.0, 0.7);
        let mut p = ConicProgram::new(4);
        p.objective[0] = -1.0;
        p.objective[1] = -1.0;
        // 2 Re(conj(t) F10) = sqrt2 (t.re x_k + t.im x_{k+1})
        p.objective[k] = -std::f64::consts::SQRT_2 * t.re;
        p.objective[k + 1] = -std::f64::consts::SQRT_2 * t.im;
        p.add_eq(vec![(0, 1.0)], 1.0);
        p.add_eq(vec![(1, 1.0)], 1.0);
        p.add_cone(Cone::HermitianPsd(n), (0..4).map(|j| vec![(j, -1.0)]).collect(), vec![0.0; 4]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let f = from_hvec(&sol.x, n);
        assert!((f[(1, 0)] - t).norm() < 1e-4, "{}", f[(1, 0)]);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x >= 1 and x <= 0
        let mut p = ConicProgram::new(1);
        p.objective = vec![1.0];
        p.add_cone(Cone::NonNegative(2), vec![vec![(0, -1.0)], vec![(0, 1.0)]], vec![-1.0, 0.0]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_dual_infeasibility() {
        // min -x s.t. x >= 0
        let mut p = ConicProgram::new(1);
        p.objective = vec![-1.0];
        p.add_cone(Cone::NonNegative(1), vec![vec![(0, -1.0)]], vec![0.0]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn rejects_bad_data() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![f64::NAN];
        p.add_cone(Cone::NonNegative(1), vec![vec![(0, -1.0)]], vec![0.0]);
        assert!(solve(&p, &SolverSettings::default()).is_err());
    }
}
