//! Planar array geometry, Tx/Rx partitioning and array response vectors.
//!
//! Element positions are kept in carrier wavelengths so every phase term is
//! frequency free. The grid places element `(r, c)` at `(x, y) = (c, r) * spacing`
//! and gives it index `r * cols + c`. Boresight is `+z`, normal to the array plane.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::evaluation::BeamWeights;

/// Speed of light used to derive the default wavelength.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier wavelength of the 28 GHz reference array, in meters.
pub const DEFAULT_WAVELENGTH_M: f64 = SPEED_OF_LIGHT / 28.0e9;

/// Which subarray a vector refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subarray {
    Tx,
    Rx,
}

/// How the elements of a rectangular grid are assigned to the two subarrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Split the longer grid axis into two equal halves: the half at lower
    /// coordinates receives, the other transmits. With `cols >= rows` the split
    /// is left/right and the Tx half sits at `+x`.
    #[default]
    LongAxisHalves,
    /// Explicit element lists; every element must appear in exactly one of them.
    Explicit { tx: Vec<usize>, rx: Vec<usize> },
}

/// Element layout of a planar aperture and its Tx/Rx partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    rows: usize,
    cols: usize,
    spacing_wl: f64,
    positions: Vec<[f64; 2]>,
    tx_indices: Vec<usize>,
    rx_indices: Vec<usize>,
    wavelength_m: f64,
}

/// JSON form of [`ArrayGeometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDoc {
    pub rows: usize,
    pub cols: usize,
    pub spacing_wl: f64,
    pub tx_indices: Vec<usize>,
    pub rx_indices: Vec<usize>,
    pub wavelength_m: f64,
}

/// Builds a `rows x cols` grid with the given element spacing (in wavelengths).
pub fn build_planar_array(
    rows: usize,
    cols: usize,
    spacing_wl: f64,
    partition: &Partition,
) -> Result<ArrayGeometry, ModelError> {
    build_planar_array_with_wavelength(rows, cols, spacing_wl, partition, DEFAULT_WAVELENGTH_M)
}

pub fn build_planar_array_with_wavelength(
    rows: usize,
    cols: usize,
    spacing_wl: f64,
    partition: &Partition,
    wavelength_m: f64,
) -> Result<ArrayGeometry, ModelError> {
    if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none_or(|n| n < 2) {
        return Err(ModelError::Geometry(format!(
            "grid {rows}x{cols} must contain at least two elements"
        )));
    }
    if !(spacing_wl.is_finite() && spacing_wl > 0.0) {
        return Err(ModelError::Geometry(format!("spacing must be positive, got {spacing_wl}")));
    }
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(ModelError::Geometry(format!(
            "wavelength must be positive, got {wavelength_m}"
        )));
    }
    let total = rows * cols;
    let positions: Vec<[f64; 2]> = (0..total)
        .map(|i| [(i % cols) as f64 * spacing_wl, (i / cols) as f64 * spacing_wl])
        .collect();

    let (tx, rx) = match partition {
        Partition::LongAxisHalves => {
            let (axis_len, coord): (usize, fn(usize, usize) -> usize) = if cols >= rows {
                (cols, |i, cols| i % cols)
            } else {
                (rows, |i, cols| i / cols)
            };
            if axis_len % 2 != 0 {
                return Err(ModelError::Partition(format!(
                    "cannot halve an axis of odd length {axis_len}"
                )));
            }
            let half = axis_len / 2;
            let (rx, tx): (Vec<usize>, Vec<usize>) =
                (0..total).partition(|&i| coord(i, cols) < half);
            (tx, rx)
        }
        Partition::Explicit { tx, rx } => (tx.clone(), rx.clone()),
    };
    validate_partition(total, &tx, &rx)?;

    Ok(ArrayGeometry {
        rows,
        cols,
        spacing_wl,
        positions,
        tx_indices: tx,
        rx_indices: rx,
        wavelength_m,
    })
}

fn validate_partition(total: usize, tx: &[usize], rx: &[usize]) -> Result<(), ModelError> {
    if tx.is_empty() {
        return Err(ModelError::Partition("Tx subarray empty".into()));
    }
    if rx.is_empty() {
        return Err(ModelError::Partition("Rx subarray empty".into()));
    }
    let mut seen = BTreeSet::new();
    for &i in tx.iter().chain(rx) {
        if i >= total {
            return Err(ModelError::Partition(format!(
                "element index {i} out of range for {total} elements"
            )));
        }
        if !seen.insert(i) {
            return Err(ModelError::Partition(format!(
                "element {i} assigned more than once"
            )));
        }
    }
    if seen.len() != total {
        let missing: Vec<usize> = (0..total).filter(|i| !seen.contains(i)).collect();
        return Err(ModelError::Partition(format!(
            "elements {missing:?} not assigned to either subarray"
        )));
    }
    Ok(())
}

impl ArrayGeometry {
    /// The 12-wide by 6-high half-wavelength array, split into two 6x6
    /// subarrays with Tx on the right (`+x`).
    pub fn reference() -> Self {
        build_planar_array(6, 12, 0.5, &Partition::LongAxisHalves)
            .expect("reference geometry is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing_wl(&self) -> f64 {
        self.spacing_wl
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    /// All element positions in wavelengths.
    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn tx_indices(&self) -> &[usize] {
        &self.tx_indices
    }

    pub fn rx_indices(&self) -> &[usize] {
        &self.rx_indices
    }

    /// Number of transmit elements `M`.
    pub fn num_tx(&self) -> usize {
        self.tx_indices.len()
    }

    /// Number of receive elements `N`.
    pub fn num_rx(&self) -> usize {
        self.rx_indices.len()
    }

    pub fn indices(&self, sub: Subarray) -> &[usize] {
        match sub {
            Subarray::Tx => &self.tx_indices,
            Subarray::Rx => &self.rx_indices,
        }
    }

    /// Positions of one subarray, in its index order.
    pub fn subarray_positions(&self, sub: Subarray) -> Vec<[f64; 2]> {
        self.indices(sub).iter().map(|&i| self.positions[i]).collect()
    }

    pub fn to_doc(&self) -> GeometryDoc {
        GeometryDoc {
            rows: self.rows,
            cols: self.cols,
            spacing_wl: self.spacing_wl,
            tx_indices: self.tx_indices.clone(),
            rx_indices: self.rx_indices.clone(),
            wavelength_m: self.wavelength_m,
        }
    }

    pub fn from_doc(doc: &GeometryDoc) -> Result<Self, ModelError> {
        build_planar_array_with_wavelength(
            doc.rows,
            doc.cols,
            doc.spacing_wl,
            &Partition::Explicit { tx: doc.tx_indices.clone(), rx: doc.rx_indices.clone() },
            doc.wavelength_m,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("geometry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: GeometryDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Geometry(e.to_string()))?;
        Self::from_doc(&doc)
    }
}

/// Elevation/azimuth pair relative to boresight, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringDirection {
    theta: f64,
    phi: f64,
}

impl SteeringDirection {
    /// Requires `theta` in `[0, pi/2)` and `phi` in `[0, 2pi)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self, ModelError> {
        if !(theta.is_finite() && (0.0..PI / 2.0).contains(&theta)) {
            return Err(ModelError::Direction(format!("theta {theta} outside [0, pi/2)")));
        }
        if !(phi.is_finite() && (0.0..TAU).contains(&phi)) {
            return Err(ModelError::Direction(format!("phi {phi} outside [0, 2pi)")));
        }
        Ok(Self { theta, phi })
    }

    /// Degrees in; azimuth is wrapped into `[0, 360)`.
    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self, ModelError> {
        let phi = phi_deg.rem_euclid(360.0).to_radians();
        // rem_euclid can round up to exactly 2pi for tiny negative inputs
        let phi = if phi >= TAU { 0.0 } else { phi };
        Self::new(theta_deg.to_radians(), phi)
    }

    pub fn boresight() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }
}

/// Array response `a(theta, phi)` of one subarray.
///
/// Entry `m` is `exp(j 2pi (x_m sin(theta) cos(phi) + y_m sin(theta) sin(phi)))`
/// with the phase reference at the coordinate origin.
pub fn array_response(
    geometry: &ArrayGeometry,
    sub: Subarray,
    direction: &SteeringDirection,
) -> DVector<Complex64> {
    let st = direction.theta.sin();
    let ux = st * direction.phi.cos();
    let uy = st * direction.phi.sin();
    let idx = geometry.indices(sub);
    DVector::from_iterator(
        idx.len(),
        idx.iter().map(|&i| {
            let [x, y] = geometry.positions[i];
            Complex64::from_polar(1.0, TAU * (x * ux + y * uy))
        }),
    )
}

/// Conjugate beamformer `sqrt(P_t / M) * a`.
pub fn cbf_weights(a: &DVector<Complex64>, p_t_mw: f64) -> Result<BeamWeights, ModelError> {
    if a.is_empty() {
        return Err(ModelError::Dimension("array response is empty".into()));
    }
    if !(p_t_mw.is_finite() && p_t_mw > 0.0) {
        return Err(ModelError::Parameter(format!("P_t must be positive, got {p_t_mw}")));
    }
    let amp = (p_t_mw / a.len() as f64).sqrt();
    Ok(BeamWeights::continuous(a.map(|v| v * amp)))
}
