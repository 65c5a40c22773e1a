//! Homogeneous self-dual predictor-corrector iteration with Nesterov-Todd scaling.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::solvers::{Llt, Solve};
use faer::{Accum, Mat, Par, Side};

use super::cones::{self, Scaling};
use super::{Cone, ConicProgram, ConicSolution, SolveStatus, SolverSettings, SparseRow};

struct Data {
    n: usize,
    c: Vec<f64>,
    a: Vec<SparseRow>,
    b: Vec<f64>,
    g: Vec<SparseRow>,
    h: Vec<f64>,
    cones: Vec<Cone>,
    offs: Vec<usize>,
    eq_scale: Vec<f64>,
    cone_scale: Vec<f64>,
    obj_scale: f64,
}

fn row_norm(r: &SparseRow) -> f64 {
    r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn mul_rows(rows: &[SparseRow], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
}

fn mul_rows_t(rows: &[SparseRow], y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (r, &yi) in rows.iter().zip(y) {
        if yi != 0.0 {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
    }
    out
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Data {
    fn new(p: &ConicProgram, equilibrate: bool) -> Self {
        let mut offs = Vec::with_capacity(p.cones.len() + 1);
        let mut o = 0;
        for c in &p.cones {
            offs.push(o);
            o += c.dim();
        }
        offs.push(o);
        let safe_inv = |v: f64| if v > 0.0 { 1.0 / v } else { 1.0 };
        let eq_scale: Vec<f64> = if equilibrate {
            p.eq_rows.iter().map(|r| safe_inv(row_norm(r))).collect()
        } else {
            vec![1.0; p.eq_rows.len()]
        };
        let mut cone_scale = vec![1.0; p.cone_rows.len()];
        if equilibrate {
            for (k, cone) in p.cones.iter().enumerate() {
                let rng = offs[k]..offs[k + 1];
                match cone {
                    Cone::NonNegative(_) => {
                        for i in rng {
                            cone_scale[i] = safe_inv(row_norm(&p.cone_rows[i]));
                        }
                    }
                    _ => {
                        let m = p.cone_rows[rng.clone()].iter().map(row_norm).fold(0.0, f64::max);
                        let s = safe_inv(m);
                        cone_scale[rng].iter_mut().for_each(|v| *v = s);
                    }
                }
            }
        }
        let cn = inf_norm(&p.objective);
        let obj_scale = if equilibrate && cn > 0.0 { 1.0 / cn } else { 1.0 };
        let scale_rows = |rows: &[SparseRow], sc: &[f64]| -> Vec<SparseRow> {
            rows.iter().zip(sc).map(|(r, &s)| r.iter().map(|&(j, v)| (j, v * s)).collect()).collect()
        };
        Data {
            n: p.num_vars,
            c: p.objective.iter().map(|v| v * obj_scale).collect(),
            a: scale_rows(&p.eq_rows, &eq_scale),
            b: p.eq_rhs.iter().zip(&eq_scale).map(|(v, s)| v * s).collect(),
            g: scale_rows(&p.cone_rows, &cone_scale),
            h: p.cone_rhs.iter().zip(&cone_scale).map(|(v, s)| v * s).collect(),
            cones: p.cones.clone(),
            offs,
            eq_scale,
            cone_scale,
            obj_scale,
        }
    }

    fn p(&self) -> usize {
        self.a.len()
    }

    fn m(&self) -> usize {
        self.g.len()
    }

    fn block<'v>(&self, k: usize, v: &'v [f64]) -> &'v [f64] {
        &v[self.offs[k]..self.offs[k + 1]]
    }
}

/// Factorized reduced KKT system for one scaling.
struct Kkt<'d> {
    data: &'d Data,
    scalings: &'d [Scaling],
    llt: Llt<f64>,
    /// `H^{-1} A^T`, `n x p`
    hinv_at: Mat<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'d> Kkt<'d> {
    fn factor(data: &'d Data, scalings: &'d [Scaling]) -> Option<Self> {
        let n = data.n;
        // only the lower triangle is read by the factorization, but both halves are filled
        let mut hm = Mat::<f64>::zeros(n, n);
        // dense orthant rows go through one GEMM
        let mut dense_cols: Vec<(usize, f64)> = Vec::new();
        for (k, (cone, sc)) in data.cones.iter().zip(scalings).enumerate() {
            let rows = &data.g[data.offs[k]..data.offs[k + 1]];
            match cone {
                Cone::NonNegative(_) => {
                    let ones = vec![1.0; rows.len()];
                    let v = sc.apply_v(&ones);
                    for (idx, (r, vi)) in rows.iter().zip(v).enumerate() {
                        if r.len() > 8 {
                            dense_cols.push((data.offs[k] + idx, vi));
                            continue;
                        }
                        for &(i, a) in r {
                            for &(j, b) in r {
                                hm[(i, j)] += vi * a * b;
                            }
                        }
                    }
                }
                _ => {
                    let d = rows.len();
                    let vd = sc.v_dense();
                    if rows.iter().all(|r| r.len() <= 1) {
                        // V is symmetric, so column j of V is row j of the buffer
                        for (j, rj) in rows.iter().enumerate() {
                            let Some(&(cj, aj)) = rj.first() else { continue };
                            let vcol = &vd[j * d..(j + 1) * d];
                            let dst = hm.col_as_slice_mut(cj);
                            for (ri, &v) in rows.iter().zip(vcol) {
                                if let Some(&(ci, ai)) = ri.first() {
                                    dst[ci] += ai * aj * v;
                                }
                            }
                        }
                        continue;
                    }
                    // T = V G_blk (dense d x n), then H += G_blk^T T
                    let mut t = vec![0.0; d * n];
                    for i in 0..d {
                        let ti = &mut t[i * n..(i + 1) * n];
                        for (j, r) in rows.iter().enumerate() {
                            let vij = vd[i * d + j];
                            if vij != 0.0 {
                                for &(col, a) in r {
                                    ti[col] += vij * a;
                                }
                            }
                        }
                    }
                    for (i, r) in rows.iter().enumerate() {
                        let ti = &t[i * n..(i + 1) * n];
                        for &(row, a) in r {
                            for (col, &tv) in ti.iter().enumerate() {
                                hm[(row, col)] += a * tv;
                            }
                        }
                    }
                }
            }
        }
        if !dense_cols.is_empty() {
            let b = Mat::<f64>::from_fn(n, dense_cols.len(), |_, _| 0.0);
            let mut b = b;
            for (c, &(row, vi)) in dense_cols.iter().enumerate() {
                let sv = vi.sqrt();
                for &(j, a) in &data.g[row] {
                    b[(j, c)] += sv * a;
                }
            }
            triangular::matmul(
                hm.as_mut(),
                BlockStructure::TriangularLower,
                Accum::Add,
                &b,
                BlockStructure::Rectangular,
                b.transpose(),
                BlockStructure::Rectangular,
                1.0,
                Par::Seq,
            );
        }
        for i in 0..n {
            let d = hm[(i, i)];
            hm[(i, i)] = d + 1e-13 * d.abs() + 1e-15;
        }
        let llt = hm.llt(Side::Lower).ok()?;
        let p = data.p();
        let (hinv_at, schur) = if p > 0 {
            let mut at = Mat::<f64>::zeros(n, p);
            for (i, r) in data.a.iter().enumerate() {
                for &(j, v) in r {
                    at[(j, i)] += v;
                }
            }
            let hinv_at = llt.solve(&at);
            let mut s = nalgebra::DMatrix::<f64>::zeros(p, p);
            for (i, r) in data.a.iter().enumerate() {
                for k in 0..p {
                    s[(i, k)] = r.iter().map(|&(j, v)| v * hinv_at[(j, k)]).sum();
                }
            }
            let sreg = 1e-14 * (0..p).map(|i| s[(i, i)].abs()).fold(1.0, f64::max);
            for i in 0..p {
                s[(i, i)] += sreg;
            }
            (hinv_at, Some(s.lu()))
        } else {
            (Mat::zeros(n, 0), None)
        };
        Some(Kkt { data, scalings, llt, hinv_at, schur })
    }

    fn apply_v(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (k, sc) in self.scalings.iter().enumerate() {
            let rng = self.data.offs[k]..self.data.offs[k + 1];
            out[rng.clone()].copy_from_slice(&sc.apply_v(&r[rng]));
        }
        out
    }

    fn apply_wtw(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (k, sc) in self.scalings.iter().enumerate() {
            let rng = self.data.offs[k]..self.data.offs[k + 1];
            out[rng.clone()].copy_from_slice(&sc.apply_wtw(&r[rng]));
        }
        out
    }

    fn hinv(&self, v: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(v.len(), 1, |i, _| v[i]);
        let x = self.llt.solve(&rhs);
        (0..v.len()).map(|i| x[(i, 0)]).collect()
    }

    fn solve_once(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.data;
        let vr3 = self.apply_v(r3);
        let mut b1 = r1.to_vec();
        axpy(1.0, &mul_rows_t(&d.g, &vr3, d.n), &mut b1);
        let t = self.hinv(&b1);
        let (dx, dy) = match &self.schur {
            Some(lu) => {
                let at = mul_rows(&d.a, &t);
                let rhs = nalgebra::DVector::from_iterator(at.len(), at.iter().zip(r2).map(|(a, b)| a - b));
                let dy = lu.solve(&rhs).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; r2.len()]);
                let mut dx = t;
                for i in 0..d.n {
                    let mut acc = 0.0;
                    for (k, yk) in dy.iter().enumerate() {
                        acc += self.hinv_at[(i, k)] * yk;
                    }
                    dx[i] -= acc;
                }
                (dx, dy)
            }
            None => (t, Vec::new()),
        };
        let mut gdx = mul_rows(&d.g, &dx);
        axpy(-1.0, r3, &mut gdx);
        let dz = self.apply_v(&gdx);
        (dx, dy, dz)
    }

    fn residual(&self, sol: &(Vec<f64>, Vec<f64>, Vec<f64>), r: (&[f64], &[f64], &[f64])) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.data;
        let (dx, dy, dz) = sol;
        let mut e1 = r.0.to_vec();
        axpy(-1.0, &mul_rows_t(&d.a, dy, d.n), &mut e1);
        axpy(-1.0, &mul_rows_t(&d.g, dz, d.n), &mut e1);
        let mut e2 = r.1.to_vec();
        axpy(-1.0, &mul_rows(&d.a, dx), &mut e2);
        let mut e3 = r.2.to_vec();
        axpy(-1.0, &mul_rows(&d.g, dx), &mut e3);
        axpy(1.0, &self.apply_wtw(dz), &mut e3);
        (e1, e2, e3)
    }

    fn solve(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut sol = self.solve_once(r1, r2, r3);
        let scale = 1.0 + inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3));
        let mut last = f64::INFINITY;
        for _ in 0..6 {
            let (e1, e2, e3) = self.residual(&sol, (r1, r2, r3));
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            if err <= 1e-15 * scale || err >= 0.9 * last {
                break;
            }
            last = err;
            let (cx, cy, cz) = self.solve_once(&e1, &e2, &e3);
            axpy(1.0, &cx, &mut sol.0);
            axpy(1.0, &cy, &mut sol.1);
            axpy(1.0, &cz, &mut sol.2);
        }
        sol
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    /// `W^{-T} ds + W dz`, kept for the corrector term
    ds_tilde: Vec<f64>,
    w_dz: Vec<f64>,
}

struct Residuals {
    rx: Vec<f64>,
    ry: Vec<f64>,
    rz: Vec<f64>,
    rtau: f64,
}

fn per_cone<F: Fn(usize, &Scaling, &[f64]) -> Vec<f64>>(data: &Data, sc: &[Scaling], v: &[f64], f: F) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (k, s) in sc.iter().enumerate() {
        let rng = data.offs[k]..data.offs[k + 1];
        out[rng.clone()].copy_from_slice(&f(k, s, &v[rng]));
    }
    out
}

fn step_to_boundary(data: &Data, it: &Iterate, d: &Direction) -> f64 {
    let mut a = f64::INFINITY;
    for (k, cone) in data.cones.iter().enumerate() {
        a = a.min(cones::max_step(cone, data.block(k, &it.s), data.block(k, &d.ds)));
        a = a.min(cones::max_step(cone, data.block(k, &it.z), data.block(k, &d.dz)));
    }
    if d.dtau < 0.0 {
        a = a.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-it.kappa / d.dkappa);
    }
    a
}

#[allow(clippy::too_many_arguments)]
fn direction(
    kkt: &Kkt,
    sc: &[Scaling],
    d1: &(Vec<f64>, Vec<f64>, Vec<f64>),
    it: &Iterate,
    res: &Residuals,
    rs: &[f64],
    rkappa: f64,
    eta: f64,
) -> Direction {
    let data = kkt.data;
    let ds_tilde = per_cone(data, sc, rs, |_, s, v| s.lambda_div(v));
    let wt_dst = per_cone(data, sc, &ds_tilde, |_, s, v| s.apply_wt(v));
    let r1: Vec<f64> = res.rx.iter().map(|v| -eta * v).collect();
    let r2: Vec<f64> = res.ry.iter().map(|v| eta * v).collect();
    let r3: Vec<f64> = res.rz.iter().zip(&wt_dst).map(|(r, w)| eta * r - w).collect();
    let (x2, y2, z2) = kkt.solve(&r1, &r2, &r3);
    let (x1, y1, z1) = d1;
    let num = -eta * res.rtau - (dot(&data.c, &x2) + dot(&data.b, &y2) + dot(&data.h, &z2)) - rkappa / it.tau;
    let den = dot(&data.c, x1) + dot(&data.b, y1) + dot(&data.h, z1) - it.kappa / it.tau;
    let dtau = num / den;
    let mut dx = x2;
    axpy(dtau, x1, &mut dx);
    let mut dy = y2;
    axpy(dtau, y1, &mut dy);
    let mut dz = z2;
    axpy(dtau, z1, &mut dz);
    let dkappa = (rkappa - it.kappa * dtau) / it.tau;
    let w_dz = per_cone(data, sc, &dz, |_, s, v| s.apply_w(v));
    let diff: Vec<f64> = ds_tilde.iter().zip(&w_dz).map(|(a, b)| a - b).collect();
    let ds = per_cone(data, sc, &diff, |_, s, v| s.apply_wt(v));
    Direction { dx, dy, dz, ds, dtau, dkappa, ds_tilde, w_dz }
}

fn initial_point(data: &Data) -> Option<Iterate> {
    let ident: Vec<Scaling> = data.cones.iter().map(Scaling::identity).collect();
    let kkt = Kkt::factor(data, &ident)?;
    let zero_n = vec![0.0; data.n];
    let zero_p = vec![0.0; data.p()];
    let zero_m = vec![0.0; data.m()];
    let (x, _, zp) = kkt.solve(&zero_n, &data.b, &data.h);
    let neg_c: Vec<f64> = data.c.iter().map(|v| -v).collect();
    let (_, y, z) = kkt.solve(&neg_c, &zero_p, &zero_m);
    let s0: Vec<f64> = zp.iter().map(|v| -v).collect();
    let shift = |v: &[f64]| {
        data.cones.iter().enumerate().map(|(k, c)| cones::boundary_shift(c, data.block(k, v))).fold(f64::NEG_INFINITY, f64::max)
    };
    let lift = |v: Vec<f64>, a: f64| -> Vec<f64> {
        if a < 0.0 {
            return v;
        }
        let mut out = v;
        for (k, c) in data.cones.iter().enumerate() {
            let e = cones::identity(c);
            axpy(1.0 + a, &e, &mut out[data.offs[k]..data.offs[k + 1]]);
        }
        out
    };
    let ap = shift(&s0);
    let ad = shift(&z);
    let s = lift(s0, ap);
    let z = lift(z, ad);
    Some(Iterate { x, y, z, s, tau: 1.0, kappa: 1.0 })
}

fn residuals(data: &Data, it: &Iterate) -> Residuals {
    let mut rx = mul_rows_t(&data.a, &it.y, data.n);
    axpy(1.0, &mul_rows_t(&data.g, &it.z, data.n), &mut rx);
    axpy(it.tau, &data.c, &mut rx);
    let ax = mul_rows(&data.a, &it.x);
    let ry: Vec<f64> = data.b.iter().zip(&ax).map(|(b, a)| b * it.tau - a).collect();
    let gx = mul_rows(&data.g, &it.x);
    let rz: Vec<f64> = data.h.iter().zip(&gx).zip(&it.s).map(|((h, g), s)| h * it.tau - g - s).collect();
    let rtau = it.kappa + dot(&data.c, &it.x) + dot(&data.b, &it.y) + dot(&data.h, &it.z);
    Residuals { rx, ry, rz, rtau }
}

#[derive(Clone, Copy)]
struct Info {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
}

fn info(data: &Data, it: &Iterate, r: &Residuals) -> Info {
    let tau = it.tau;
    let pnorm = 1.0f64.max(norm(&data.b)).max(norm(&data.h));
    let pres = norm(&r.ry).max(norm(&r.rz)) / tau / pnorm;
    let dres = norm(&r.rx) / tau / 1.0f64.max(norm(&data.c));
    let pobj = dot(&data.c, &it.x) / tau;
    let dobj = -(dot(&data.b, &it.y) + dot(&data.h, &it.z)) / tau;
    let gap = dot(&it.s, &it.z) / (tau * tau);
    let relgap = if pobj < 0.0 {
        gap / -pobj
    } else if dobj > 0.0 {
        gap / dobj
    } else {
        f64::INFINITY
    };
    Info { pres, dres, gap, relgap }
}

fn converged(inf: &Info, feas: f64, abs: f64, rel: f64) -> bool {
    inf.pres <= feas && inf.dres <= feas && (inf.gap <= abs || inf.relgap <= rel)
}

enum Certificate {
    Primal,
    Dual,
}

fn infeasibility(data: &Data, it: &Iterate, tol: f64) -> Option<Certificate> {
    let hz_by = dot(&data.h, &it.z) + dot(&data.b, &it.y);
    if hz_by < 0.0 {
        let mut r = mul_rows_t(&data.a, &it.y, data.n);
        axpy(1.0, &mul_rows_t(&data.g, &it.z, data.n), &mut r);
        if norm(&r) / -hz_by <= tol {
            return Some(Certificate::Primal);
        }
    }
    let cx = dot(&data.c, &it.x);
    if cx < 0.0 {
        let ax = mul_rows(&data.a, &it.x);
        let mut gs = mul_rows(&data.g, &it.x);
        axpy(1.0, &it.s, &mut gs);
        if norm(&ax).max(norm(&gs)) / -cx <= tol {
            return Some(Certificate::Dual);
        }
    }
    None
}

fn finish(program: &ConicProgram, data: &Data, it: &Iterate, status: SolveStatus, iterations: usize) -> ConicSolution {
    let infeasible = matches!(status, SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible);
    let tau = if infeasible { 1.0 } else { it.tau };
    let x: Vec<f64> = it.x.iter().map(|v| v / tau).collect();
    let s: Vec<f64> = it.s.iter().zip(&data.cone_scale).map(|(v, d)| v / tau / d).collect();
    let y: Vec<f64> = it.y.iter().zip(&data.eq_scale).map(|(v, e)| v / tau * e / data.obj_scale).collect();
    let z: Vec<f64> = it.z.iter().zip(&data.cone_scale).map(|(v, d)| v / tau * d / data.obj_scale).collect();
    let primal_objective = dot(&program.objective, &x);
    let dual_objective = -(dot(&program.eq_rhs, &y) + dot(&program.cone_rhs, &z));
    let ax = mul_rows(&program.eq_rows, &x);
    let gx = mul_rows(&program.cone_rows, &x);
    let pr_eq = ax.iter().zip(&program.eq_rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pr_cone = gx.iter().zip(&s).zip(&program.cone_rhs).map(|((g, s), h)| (g + s - h).abs()).fold(0.0, f64::max);
    let mut rd = mul_rows_t(&program.eq_rows, &y, program.num_vars);
    axpy(1.0, &mul_rows_t(&program.cone_rows, &z, program.num_vars), &mut rd);
    axpy(1.0, &program.objective, &mut rd);
    ConicSolution {
        status,
        x,
        s,
        y,
        z,
        primal_objective,
        dual_objective,
        primal_residual: pr_eq.max(pr_cone),
        dual_residual: inf_norm(&rd),
        iterations,
    }
}

/// Restores the best iterate seen and grades it against the full and reduced tolerances.
fn fallback(it: &mut Iterate, best: &mut Option<(f64, Iterate, Info)>, st: &SolverSettings) -> SolveStatus {
    let Some((_, b, bi)) = best.take() else { return SolveStatus::NumericalFailure };
    *it = b;
    if converged(&bi, st.feas_tol, st.abs_tol, st.rel_tol) {
        SolveStatus::Optimal
    } else if converged(&bi, st.reduced_tol, st.reduced_tol, st.reduced_tol) {
        SolveStatus::AlmostOptimal
    } else {
        SolveStatus::NumericalFailure
    }
}

pub(super) fn solve(program: &ConicProgram, st: &SolverSettings) -> ConicSolution {
    let data = Data::new(program, st.equilibrate);
    let nu: f64 = data.cones.iter().map(|c| c.degree() as f64).sum::<f64>() + 1.0;
    let mut it = match initial_point(&data) {
        Some(it) => it,
        None => {
            let empty = Iterate {
                x: vec![0.0; data.n],
                y: vec![0.0; data.p()],
                z: vec![0.0; data.m()],
                s: vec![0.0; data.m()],
                tau: 1.0,
                kappa: 1.0,
            };
            return finish(program, &data, &empty, SolveStatus::NumericalFailure, 0);
        }
    };
    let mut iter = 0;
    let mut best: Option<(f64, Iterate, Info)> = None;
    let status = loop {
        let res = residuals(&data, &it);
        let inf = info(&data, &it, &res);
        if converged(&inf, st.feas_tol, st.abs_tol, st.rel_tol) {
            break SolveStatus::Optimal;
        }
        match infeasibility(&data, &it, st.feas_tol) {
            Some(Certificate::Primal) => break SolveStatus::PrimalInfeasible,
            Some(Certificate::Dual) => break SolveStatus::DualInfeasible,
            None => {}
        }
        let merit = inf.pres.max(inf.dres).max(inf.gap.min(inf.relgap));
        if best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((merit, it.clone(), inf));
        }
        if iter >= st.max_iters {
            break fallback(&mut it, &mut best, st);
        }
        // stop once accuracy has clearly degraded past a usable point
        let best_merit = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if merit > 100.0 * best_merit && best_merit <= st.reduced_tol {
            break fallback(&mut it, &mut best, st);
        }
        let scalings: Option<Vec<Scaling>> = data
            .cones
            .iter()
            .enumerate()
            .map(|(k, c)| Scaling::compute(c, data.block(k, &it.s), data.block(k, &it.z)))
            .collect();
        let Some(scalings) = scalings else { break fallback(&mut it, &mut best, st) };
        let Some(kkt) = Kkt::factor(&data, &scalings) else { break fallback(&mut it, &mut best, st) };
        let neg_c: Vec<f64> = data.c.iter().map(|v| -v).collect();
        let d1 = kkt.solve(&neg_c, &data.b, &data.h);
        let lambda = per_cone(&data, &scalings, &it.s, |_, s, _| s.lambda());
        let lam_sq = per_cone(&data, &scalings, &lambda, |_, s, v| s.lambda_prod(v));
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / nu;

        // predictor
        let rs_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let rk_aff = -it.tau * it.kappa;
        let aff = direction(&kkt, &scalings, &d1, &it, &res, &rs_aff, rk_aff, 1.0);
        let alpha_aff = step_to_boundary(&data, &it, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let wi_ds: Vec<f64> = aff.ds_tilde.iter().zip(&aff.w_dz).map(|(a, b)| a - b).collect();
        let mut rs = rs_aff.clone();
        for (k, cone) in data.cones.iter().enumerate() {
            let rng = data.offs[k]..data.offs[k + 1];
            let corr = cones::jordan(cone, &wi_ds[rng.clone()], &aff.w_dz[rng.clone()]);
            let e = cones::identity(cone);
            for ((r, c), ei) in rs[rng].iter_mut().zip(corr).zip(e) {
                *r += -c + sigma * mu * ei;
            }
        }
        let rk = rk_aff - aff.dtau * aff.dkappa + sigma * mu;
        let dir = direction(&kkt, &scalings, &d1, &it, &res, &rs, rk, 1.0 - sigma);
        let amax = step_to_boundary(&data, &it, &dir);
        let alpha = (st.step_fraction * amax).min(1.0);
        if !(alpha > 1e-10) {
            break fallback(&mut it, &mut best, st);
        }
        axpy(alpha, &dir.dx, &mut it.x);
        axpy(alpha, &dir.dy, &mut it.y);
        axpy(alpha, &dir.dz, &mut it.z);
        axpy(alpha, &dir.ds, &mut it.s);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
        iter += 1;
        if it.x.iter().chain(&it.z).any(|v| !v.is_finite()) {
            break fallback(&mut it, &mut best, st);
        }
    };
    finish(program, &data, &it, status, iter)
}
