//! Discrete phase-shifter settings, their polygon hull, and quantization.
//!
//! A `b`-bit shifter realizes `K = 2^b` phases `v_k = 2pi k / K` (zero based here)
//! at a fixed per-element amplitude. The convex hull of the realizable points is a
//! regular `K`-gon, described by `K` halfspaces `Re(t_k^* z) <= r cos(pi / K)` with
//! outward normals `t_k = exp(j (v_k + v_{k+1}) / 2)`.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::ModelError;
use crate::evaluation::BeamWeights;
use crate::si_channel::ChannelMatrix;

/// Largest supported resolution.
pub const MAX_BITS: u32 = 16;

/// Default number of rotation samples per codebook period.
pub const DEFAULT_GRID_POINTS: usize = 256;

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCodebook {
    bits: u32,
    amplitude: f64,
}

impl PhaseCodebook {
    pub fn new(bits: u32, amplitude: f64) -> Result<Self, ModelError> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(ModelError::Parameter(format!("bits must be in [1, {MAX_BITS}], got {bits}")));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(ModelError::Parameter(format!("amplitude must be positive, got {amplitude}")));
        }
        Ok(Self { bits, amplitude })
    }

    /// Codebook whose amplitude splits `p_t_mw` evenly over `num_tx` elements.
    pub fn for_power(bits: u32, p_t_mw: f64, num_tx: usize) -> Result<Self, ModelError> {
        if num_tx == 0 {
            return Err(ModelError::Parameter("need at least one Tx element".into()));
        }
        Self::new(bits, (p_t_mw / num_tx as f64).sqrt())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of settings `K`.
    pub fn size(&self) -> usize {
        1usize << self.bits
    }

    /// Per-element magnitude in sqrt(mW).
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Angular spacing `2pi / K`.
    pub fn spacing(&self) -> f64 {
        TAU / self.size() as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        TAU * index as f64 / self.size() as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.size()).map(|k| self.phase(k)).collect()
    }

    /// The realizable weight for setting `index`.
    pub fn point(&self, index: usize) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase(index))
    }

    /// Hull of the codebook scaled to `radius`.
    pub fn hull(&self, radius: f64) -> PolygonHull {
        PolygonHull::new(self.size(), radius)
    }

    /// Index of the setting nearest to `phase + beta` on the circle.
    /// Equidistant candidates resolve to the smaller index.
    pub fn quantize(&self, phase: f64, beta: f64) -> usize {
        let k = self.size();
        let target = phase + beta;
        let pos = target.rem_euclid(TAU) / self.spacing();
        let base = pos.floor() as i64;
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        let mut candidates: Vec<usize> =
            (base - 1..=base + 1).map(|c| c.rem_euclid(k as i64) as usize).collect();
        candidates.sort_unstable();
        candidates.dedup();
        for c in candidates {
            let d = wrap_phase(target - self.phase(c)).abs();
            if d < best_dist || (d == best_dist && c < best) {
                best = c;
                best_dist = d;
            }
        }
        best
    }

    /// Nearest-phase projection of every entry of `f` after rotating by `beta`.
    pub fn project(&self, f: &DVector<Complex64>, beta: f64) -> BeamWeights {
        let indices = f.iter().map(|v| self.quantize(v.arg(), beta)).collect();
        BeamWeights::quantized(self, indices)
    }
}

/// Returns the nearest codebook phase (in radians) to `phase + beta`.
pub fn quantize_phase(phase: f64, codebook: &PhaseCodebook, beta: f64) -> f64 {
    codebook.phase(codebook.quantize(phase, beta))
}

/// Halfspace description of a regular `K`-gon with vertices `radius * exp(j v_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonHull {
    radius: f64,
    normals: Vec<Complex64>,
    offset: f64,
}

impl PolygonHull {
    pub fn new(k: usize, radius: f64) -> Self {
        assert!(k >= 2, "polygon needs at least two vertices");
        assert!(radius >= 0.0, "radius must be nonnegative");
        let step = TAU / k as f64;
        let normals = (0..k).map(|i| Complex64::from_polar(1.0, (i as f64 + 0.5) * step)).collect();
        Self { radius, normals, offset: radius * (PI / k as f64).cos() }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Outward unit normals `t_k`; normal `k` faces the edge between vertices `k` and `k+1`.
    pub fn normals(&self) -> &[Complex64] {
        &self.normals
    }

    /// Common offset `radius * cos(pi / K)`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `offset - Re(t_k^* z)` for every halfspace; nonnegative inside.
    pub fn slacks(&self, z: Complex64) -> Vec<f64> {
        self.normals.iter().map(|t| self.offset - (t.conj() * z).re).collect()
    }

    /// Membership with tolerance `1e-9 * radius`.
    ///
    /// For `K = 2` the halfspaces only fix the line through both vertices, so
    /// the radius bound is checked as well (it is redundant for `K >= 3`).
    pub fn contains(&self, z: Complex64) -> bool {
        let tol = 1e-9 * self.radius;
        z.norm() <= self.radius + tol && self.normals.iter().all(|t| (t.conj() * z).re <= self.offset + tol)
    }
}

/// Result of the rotation search.
#[derive(Debug, Clone)]
pub struct Projection {
    pub beta: f64,
    pub weights: BeamWeights,
    /// `max_n |H_n f_hat|^2` in mW.
    pub max_si_mw: f64,
}

fn max_si(h: &ChannelMatrix, f: &DVector<Complex64>) -> f64 {
    let hf = h.entries() * f;
    hf.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
}

/// Searches a uniform grid of rotations over one codebook period and returns
/// the nearest-phase projection that minimizes the largest per-antenna SI.
/// Ties go to the smaller rotation.
pub fn rotate_project(
    f_star: &DVector<Complex64>,
    codebook: &PhaseCodebook,
    h: &ChannelMatrix,
    grid_points: usize,
) -> Result<Projection, ModelError> {
    if f_star.len() != h.num_tx() {
        return Err(ModelError::Dimension(format!(
            "f* has length {}, channel has {} Tx columns",
            f_star.len(),
            h.num_tx()
        )));
    }
    if grid_points == 0 {
        return Err(ModelError::Parameter("grid_points must be at least 1".into()));
    }
    let phases: Vec<f64> = f_star.iter().map(|v| v.arg()).collect();
    let step = codebook.spacing() / grid_points as f64;

    let mut best: Option<(f64, Vec<usize>, f64)> = None;
    let mut last: Option<(Vec<usize>, f64)> = None;
    for g in 0..grid_points {
        let beta = g as f64 * step;
        let indices: Vec<usize> = phases.iter().map(|&p| codebook.quantize(p, beta)).collect();
        let obj = match &last {
            Some((prev, obj)) if *prev == indices => *obj,
            _ => {
                let w = BeamWeights::quantized(codebook, indices.clone());
                max_si(h, w.weights())
            }
        };
        if best.as_ref().is_none_or(|(_, _, b)| obj < *b) {
            best = Some((beta, indices.clone(), obj));
        }
        last = Some((indices, obj));
    }
    let (beta, indices, max_si_mw) = best.expect("grid is nonempty");
    Ok(Projection { beta, weights: BeamWeights::quantized(codebook, indices), max_si_mw })
}
