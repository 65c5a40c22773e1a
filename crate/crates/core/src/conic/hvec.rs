//! Isometric real coordinates for Hermitian matrices.
//!
//! An `n x n` Hermitian matrix maps to `n^2` reals: the `n` diagonal entries
//! first, then for every strictly-lower pair `(p, q)`, `p > q`, in column order
//! the two values `sqrt(2) Re F[p,q]` and `sqrt(2) Im F[p,q]`. With this scaling
//! the Euclidean inner product equals `Re tr(X Y)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::SQRT_2;

pub fn hvec_len(n: usize) -> usize {
    n * n
}

/// Index of `sqrt(2) Re F[p,q]` for `p > q`; the imaginary part follows it.
pub fn offdiag_index(n: usize, p: usize, q: usize) -> usize {
    debug_assert!(p > q && p < n);
    let pair = q * n - q * (q + 1) / 2 + (p - q - 1);
    n + 2 * pair
}

pub fn to_hvec(m: &DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    for q in 0..n {
        for p in q + 1..n {
            let k = offdiag_index(n, p, q);
            // average the two triangles so slightly non-Hermitian input is projected
            let v = (m[(p, q)] + m[(q, p)].conj()) * 0.5;
            out[k] = SQRT_2 * v.re;
            out[k + 1] = SQRT_2 * v.im;
        }
    }
    out
}

pub fn from_hvec(v: &[f64], n: usize) -> DMatrix<Complex64> {
    assert_eq!(v.len(), n * n, "hvec length does not match matrix order");
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(v[i], 0.0);
    }
    for q in 0..n {
        for p in q + 1..n {
            let k = offdiag_index(n, p, q);
            let z = Complex64::new(v[k], v[k + 1]) / SQRT_2;
            m[(p, q)] = z;
            m[(q, p)] = z.conj();
        }
    }
    m
}

/// Coefficients of `x -> Re(conj(t) F[p,q])` in hvec coordinates (`p > q`).
pub fn offdiag_functional(n: usize, p: usize, q: usize, t: Complex64) -> [(usize, f64); 2] {
    let k = offdiag_index(n, p, q);
    [(k, t.re / SQRT_2), (k + 1, t.im / SQRT_2)]
}

/// Sparse coefficients of `x -> Re tr(C F)` for Hermitian `C`.
pub fn trace_functional(c: &DMatrix<Complex64>) -> Vec<(usize, f64)> {
    to_hvec(c).into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
}
