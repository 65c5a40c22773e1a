//! Cone kernels: Nesterov-Todd scaling, Jordan algebra, and step limits for the
//! nonnegative orthant, second-order cones, and Hermitian PSD cones.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use super::hvec::{from_hvec, offdiag_index, to_hvec};
use super::Cone;

/// Nesterov-Todd scaling `W` of one cone block, with `W z = W^{-T} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    NonNeg {
        /// diagonal of `W`, `sqrt(s / z)`
        w: Vec<f64>,
        lambda: Vec<f64>,
    },
    Soc {
        eta: f64,
        wbar: Vec<f64>,
        lambda: Vec<f64>,
    },
    Psd {
        n: usize,
        r: DMatrix<Complex64>,
        q: DMatrix<Complex64>,
        lambda: Vec<f64>,
    },
}

fn soc_residual(u: &[f64]) -> f64 {
    let tail: f64 = u[1..].iter().map(|v| v * v).sum();
    u[0] * u[0] - tail
}

fn hermitian_from(v: &[f64], n: usize) -> DMatrix<Complex64> {
    from_hvec(v, n)
}

impl Scaling {
    /// Identity scaling (used for the initial point).
    pub(crate) fn identity(cone: &Cone) -> Self {
        match *cone {
            Cone::NonNegative(l) => Scaling::NonNeg { w: vec![1.0; l], lambda: vec![1.0; l] },
            Cone::SecondOrder(q) => {
                let mut wbar = vec![0.0; q];
                wbar[0] = 1.0;
                let mut lambda = vec![0.0; q];
                lambda[0] = 1.0;
                Scaling::Soc { eta: 1.0, wbar, lambda }
            }
            Cone::HermitianPsd(n) => Scaling::Psd {
                n,
                r: DMatrix::identity(n, n),
                q: DMatrix::identity(n, n),
                lambda: vec![1.0; n],
            },
        }
    }

    /// Computes the scaling at a strictly interior pair `(s, z)`.
    pub(crate) fn compute(cone: &Cone, s: &[f64], z: &[f64]) -> Option<Self> {
        match *cone {
            Cone::NonNegative(_) => {
                if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let w = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
                let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
                Some(Scaling::NonNeg { w, lambda })
            }
            Cone::SecondOrder(q) => {
                let (sr, zr) = (soc_residual(s), soc_residual(z));
                if !(sr > 0.0 && zr > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sr.sqrt(), zr.sqrt());
                let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let mut wbar = vec![0.0; q];
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..q {
                    wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                let eta = (sn / zn).sqrt();
                let mut sc = Scaling::Soc { eta, wbar, lambda: Vec::new() };
                let lambda = sc.apply_w(z);
                if let Scaling::Soc { lambda: l, .. } = &mut sc {
                    *l = lambda;
                }
                Some(sc)
            }
            Cone::HermitianPsd(n) => {
                let sm = hermitian_from(s, n);
                let zm = hermitian_from(z, n);
                let ls = sm.cholesky()?.l();
                let lz = zm.cholesky()?.l();
                let prod = lz.adjoint() * &ls;
                let svd = SVD::new(prod, false, true);
                let v_t = svd.v_t?;
                let sig = svd.singular_values;
                if sig.iter().any(|&x| !(x > 0.0)) {
                    return None;
                }
                let inv_sqrt = DMatrix::from_diagonal(&sig.map(|x| Complex64::new(1.0 / x.sqrt(), 0.0)));
                let sqrt = DMatrix::from_diagonal(&sig.map(|x| Complex64::new(x.sqrt(), 0.0)));
                let r = &ls * v_t.adjoint() * &inv_sqrt;
                // invert through the factors of R itself so that R R^{-1} = I to working precision
                let ls_inv = ls.solve_lower_triangular(&DMatrix::identity(n, n))?;
                let rinv = &sqrt * &v_t * ls_inv;
                let q = rinv.adjoint() * &rinv;
                Some(Scaling::Psd { n, r, q, lambda: sig.iter().copied().collect() })
            }
        }
    }

    /// `lambda` in the block's own coordinates.
    pub(crate) fn lambda(&self) -> Vec<f64> {
        match self {
            Scaling::NonNeg { lambda, .. } | Scaling::Soc { lambda, .. } => lambda.clone(),
            Scaling::Psd { n, lambda, .. } => {
                let mut out = vec![0.0; n * n];
                out[..*n].copy_from_slice(lambda);
                out
            }
        }
    }

    /// `W u`.
    pub(crate) fn apply_w(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::NonNeg { w, .. } => u.iter().zip(w).map(|(a, b)| a * b).collect(),
            Scaling::Soc { eta, wbar, .. } => soc_apply(*eta, wbar, u, false),
            Scaling::Psd { n, r, .. } => {
                let um = hermitian_from(u, *n);
                to_hvec(&(r.adjoint() * um * r))
            }
        }
    }

    /// `W^T u`.
    pub(crate) fn apply_wt(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::Psd { n, r, .. } => {
                let um = hermitian_from(u, *n);
                to_hvec(&(r * um * r.adjoint()))
            }
            _ => self.apply_w(u),
        }
    }

    /// `(W^T W)^{-1} u`.
    pub(crate) fn apply_v(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::NonNeg { w, .. } => u.iter().zip(w).map(|(a, b)| a / (b * b)).collect(),
            Scaling::Soc { eta, wbar, .. } => {
                let t = soc_apply(*eta, wbar, u, true);
                soc_apply(*eta, wbar, &t, true)
            }
            Scaling::Psd { n, q, .. } => {
                let um = hermitian_from(u, *n);
                to_hvec(&(q * um * q))
            }
        }
    }

    /// `W^T W u`.
    pub(crate) fn apply_wtw(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::NonNeg { w, .. } => u.iter().zip(w).map(|(a, b)| a * b * b).collect(),
            Scaling::Soc { eta, wbar, .. } => {
                let t = soc_apply(*eta, wbar, u, false);
                soc_apply(*eta, wbar, &t, false)
            }
            Scaling::Psd { .. } => self.apply_wt(&self.apply_w(u)),
        }
    }

    /// Dense `(W^T W)^{-1}` as a row-major `dim x dim` buffer (not used for the orthant).
    pub(crate) fn v_dense(&self) -> Vec<f64> {
        match self {
            Scaling::NonNeg { w, .. } => {
                let l = w.len();
                let mut out = vec![0.0; l * l];
                for i in 0..l {
                    out[i * l + i] = 1.0 / (w[i] * w[i]);
                }
                out
            }
            Scaling::Soc { wbar, .. } => {
                let q = wbar.len();
                let mut out = vec![0.0; q * q];
                let mut e = vec![0.0; q];
                for j in 0..q {
                    e[j] = 1.0;
                    let col = self.apply_v(&e);
                    e[j] = 0.0;
                    for i in 0..q {
                        out[i * q + j] = col[i];
                    }
                }
                out
            }
            Scaling::Psd { n, q, .. } => psd_phi(*n, q),
        }
    }

    /// `lambda o u`.
    pub(crate) fn lambda_prod(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::NonNeg { lambda, .. } => u.iter().zip(lambda).map(|(a, b)| a * b).collect(),
            Scaling::Soc { lambda, .. } => soc_prod(lambda, u),
            Scaling::Psd { n, lambda, .. } => psd_diag_prod(*n, lambda, u, false),
        }
    }

    /// `lambda \ u`, the inverse of `u -> lambda o u`.
    pub(crate) fn lambda_div(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Scaling::NonNeg { lambda, .. } => u.iter().zip(lambda).map(|(a, b)| a / b).collect(),
            Scaling::Soc { lambda, .. } => {
                let l0 = lambda[0];
                let det = soc_residual(lambda);
                let dot: f64 = lambda[1..].iter().zip(&u[1..]).map(|(a, b)| a * b).sum();
                let x0 = (l0 * u[0] - dot) / det;
                let mut out = vec![x0; u.len()];
                for i in 1..u.len() {
                    out[i] = (u[i] - x0 * lambda[i]) / l0;
                }
                out
            }
            Scaling::Psd { n, lambda, .. } => psd_diag_prod(*n, lambda, u, true),
        }
    }
}

fn soc_apply(eta: f64, wbar: &[f64], u: &[f64], inverse: bool) -> Vec<f64> {
    let sign = if inverse { -1.0 } else { 1.0 };
    let w0 = wbar[0];
    let dot: f64 = wbar[1..].iter().zip(&u[1..]).map(|(a, b)| a * b).sum();
    let scale = if inverse { 1.0 / eta } else { eta };
    let mut out = vec![0.0; u.len()];
    out[0] = scale * (w0 * u[0] + sign * dot);
    let coef = sign * u[0] + dot / (1.0 + w0);
    for i in 1..u.len() {
        out[i] = scale * (u[i] + coef * wbar[i]);
    }
    out
}

fn soc_prod(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    out[0] = a.iter().zip(b).map(|(x, y)| x * y).sum();
    for i in 1..a.len() {
        out[i] = a[0] * b[i] + b[0] * a[i];
    }
    out
}

fn psd_diag_prod(n: usize, lambda: &[f64], u: &[f64], divide: bool) -> Vec<f64> {
    let mut out = u.to_vec();
    for i in 0..n {
        out[i] = if divide { u[i] / lambda[i] } else { u[i] * lambda[i] };
    }
    for q in 0..n {
        for p in q + 1..n {
            let k = offdiag_index(n, p, q);
            let f = 0.5 * (lambda[p] + lambda[q]);
            let f = if divide { 1.0 / f } else { f };
            out[k] *= f;
            out[k + 1] *= f;
        }
    }
    out
}

/// Jordan product `a o b` on a cone block.
pub(crate) fn jordan(cone: &Cone, a: &[f64], b: &[f64]) -> Vec<f64> {
    match *cone {
        Cone::NonNegative(_) => a.iter().zip(b).map(|(x, y)| x * y).collect(),
        Cone::SecondOrder(_) => soc_prod(a, b),
        Cone::HermitianPsd(n) => {
            let am = hermitian_from(a, n);
            let bm = hermitian_from(b, n);
            let p = &am * &bm;
            to_hvec(&((&p + p.adjoint()) * Complex64::new(0.5, 0.0)))
        }
    }
}

/// Identity element `e` of a cone block.
pub(crate) fn identity(cone: &Cone) -> Vec<f64> {
    let mut e = vec![0.0; cone.dim()];
    match *cone {
        Cone::NonNegative(_) => e.iter_mut().for_each(|v| *v = 1.0),
        Cone::SecondOrder(_) => e[0] = 1.0,
        Cone::HermitianPsd(n) => e[..n].iter_mut().for_each(|v| *v = 1.0),
    }
    e
}

/// Smallest `t` such that `u + t e` lies in the closed cone (negative when interior).
pub(crate) fn boundary_shift(cone: &Cone, u: &[f64]) -> f64 {
    match *cone {
        Cone::NonNegative(_) => u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(-v)),
        Cone::SecondOrder(_) => {
            let tail: f64 = u[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            tail - u[0]
        }
        Cone::HermitianPsd(n) => {
            let m = hermitian_from(u, n);
            let eig = SymmetricEigen::new(m).eigenvalues;
            -eig.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    }
}

/// Largest `t >= 0` with `u + t du` in the cone (`u` strictly interior), or infinity.
pub(crate) fn max_step(cone: &Cone, u: &[f64], du: &[f64]) -> f64 {
    match *cone {
        Cone::NonNegative(_) => u
            .iter()
            .zip(du)
            .filter(|(_, d)| **d < 0.0)
            .map(|(v, d)| -v / d)
            .fold(f64::INFINITY, f64::min),
        Cone::SecondOrder(_) => {
            let a = soc_residual(du);
            let b = u[0] * du[0] - u[1..].iter().zip(&du[1..]).map(|(x, y)| x * y).sum::<f64>();
            let c = soc_residual(u).max(0.0);
            let mut best = f64::INFINITY;
            // roots of a t^2 + 2 b t + c
            if a.abs() < 1e-300 {
                if b < 0.0 {
                    best = -c / (2.0 * b);
                }
            } else {
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let qq = -(b + b.signum() * sq);
                    for r in [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }] {
                        if r > 0.0 && r < best {
                            best = r;
                        }
                    }
                }
            }
            // the scalar part must also stay positive
            if du[0] < 0.0 {
                best = best.min(-u[0] / du[0]);
            }
            best
        }
        Cone::HermitianPsd(n) => {
            let um = hermitian_from(u, n);
            let dm = hermitian_from(du, n);
            let l = match um.cholesky() {
                Some(c) => c.l(),
                None => return 0.0,
            };
            let x = match l.solve_lower_triangular(&dm) {
                Some(x) => x,
                None => return 0.0,
            };
            let m = match l.solve_lower_triangular(&x.adjoint()) {
                Some(m) => m,
                None => return 0.0,
            };
            let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let lmin = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Coord {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn coords(n: usize) -> Vec<Coord> {
    let mut out = vec![Coord::Diag(0); n * n];
    for (i, c) in out.iter_mut().enumerate().take(n) {
        *c = Coord::Diag(i);
    }
    for q in 0..n {
        for p in q + 1..n {
            let k = offdiag_index(n, p, q);
            out[k] = Coord::Re(p, q);
            out[k + 1] = Coord::Im(p, q);
        }
    }
    out
}

/// Matrix of `U -> Q U Q` in hvec coordinates, row-major `n^2 x n^2`.
///
/// Entries come from `(Q U Q)_pq = sum_rs Q_pr U_rs Q_sq` applied to the hvec basis.
fn psd_phi(n: usize, q: &DMatrix<Complex64>) -> Vec<f64> {
    let d = n * n;
    let s2 = std::f64::consts::SQRT_2;
    let cs = coords(n);
    let qf: Vec<Complex64> = (0..n * n).map(|k| q[(k / n, k % n)]).collect();
    let qq = |i: usize, j: usize| qf[i * n + j];
    // (q_a q_b^*)_{pr}
    let outer = |p: usize, r: usize, a: usize, b: usize| qq(p, a) * qq(r, b).conj();
    let mut out = vec![0.0; d * d];
    // symmetric, so filling whole columns keeps the writes contiguous
    for (col, &c) in cs.iter().enumerate() {
        let dst = &mut out[col * d..(col + 1) * d];
        for (v, &r) in dst.iter_mut().zip(&cs) {
            *v = match (c, r) {
                (Coord::Diag(a), Coord::Diag(i)) => qq(i, a).norm_sqr(),
                (Coord::Diag(a), Coord::Re(p, r)) => s2 * outer(p, r, a, a).re,
                (Coord::Diag(a), Coord::Im(p, r)) => s2 * outer(p, r, a, a).im,
                (Coord::Re(a, b), Coord::Diag(i)) => s2 * outer(i, i, a, b).re,
                (Coord::Re(a, b), Coord::Re(p, r)) => (outer(p, r, a, b) + outer(p, r, b, a)).re,
                (Coord::Re(a, b), Coord::Im(p, r)) => (outer(p, r, a, b) + outer(p, r, b, a)).im,
                (Coord::Im(a, b), Coord::Diag(i)) => -s2 * outer(i, i, a, b).im,
                (Coord::Im(a, b), Coord::Re(p, r)) => -(outer(p, r, a, b) - outer(p, r, b, a)).im,
                (Coord::Im(a, b), Coord::Im(p, r)) => (outer(p, r, a, b) - outer(p, r, b, a)).re,
            };
        }
    }
    out
}
