//! Browser bindings. Every export returns a JSON string; the `*_json`
//! functions hold the logic so they can be tested natively.

use ibfd_core::array_model::{array_response, build_planar_array, cbf_weights, Partition, SteeringDirection, Subarray};
use ibfd_core::evaluation::{
    bf_gain, brute_force_oracle, dbm_to_mw, max_si_mw, mw_to_dbm, run_designer, BeamWeights, Designer,
    DEFAULT_ORACLE_CAP,
};
use ibfd_core::si_channel::{synth_coupling, DEFAULT_REFERENCE_COUPLING_DB};
use ibfd_core::{ArrayGeometry, DesignProblem, PhaseCodebook, PipelineConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const P_T_MW: f64 = 1000.0;
/// Demo array for `design`: 2 x 4, halves of 4 elements each.
const DEMO_ROWS: usize = 2;
const DEMO_COLS: usize = 4;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Gain of fixed weights along the cut through `phi`, theta in [-90, 90].
fn pattern(geom: &ArrayGeometry, w: &BeamWeights, phi_deg: f64, points: usize) -> Result<Vec<f64>, String> {
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let t = -90.0 + 180.0 * i as f64 / (n - 1) as f64;
            let (theta, phi) = if t < 0.0 { (-t, phi_deg + 180.0) } else { (t, phi_deg) };
            // endfire is outside the direction domain
            let theta = theta.min(89.999);
            let dir = SteeringDirection::from_degrees(theta, phi.rem_euclid(360.0)).map_err(err)?;
            let a = array_response(geom, Subarray::Tx, &dir);
            bf_gain(w, &a).map(|g| g.max(-40.0)).map_err(err)
        })
        .collect()
}

fn angles(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| -90.0 + 180.0 * i as f64 / (n - 1) as f64).collect()
}

/// Pattern cut of the conventional beamformer and its `bits`-bit quantization.
pub fn beam_pattern_json(
    rows: usize,
    cols: usize,
    theta_deg: f64,
    phi_deg: f64,
    bits: u32,
    points: usize,
) -> Result<String, String> {
    let geom = build_planar_array(rows, cols, 0.5, &Partition::LongAxisHalves).map_err(err)?;
    let dir = SteeringDirection::from_degrees(theta_deg, phi_deg).map_err(err)?;
    let a = array_response(&geom, Subarray::Tx, &dir);
    let cbf = cbf_weights(&a, P_T_MW).map_err(err)?;
    let cb = PhaseCodebook::for_power(bits, P_T_MW, geom.num_tx()).map_err(err)?;
    let q = cb.project(cbf.weights(), 0.0);
    let h = synth_coupling(&geom, DEFAULT_REFERENCE_COUPLING_DB).map_err(err)?;
    Ok(json!({
        "theta_deg": angles(points),
        "cbf_db": pattern(&geom, &cbf, phi_deg, points)?,
        "quantized_db": pattern(&geom, &q, phi_deg, points)?,
        "cbf_max_si_dbm": mw_to_dbm(max_si_mw(&cbf, &h).map_err(err)?),
        "quantized_max_si_dbm": mw_to_dbm(max_si_mw(&q, &h).map_err(err)?),
        "num_tx": geom.num_tx(),
    })
    .to_string())
}

/// Nearest codebook setting for one phase, with the polygon hull vertices
/// and the halfspace slacks of the unquantized unit-circle point.
pub fn quantize_json(bits: u32, phase_deg: f64, beta_deg: f64) -> Result<String, String> {
    let cb = PhaseCodebook::new(bits, 1.0).map_err(err)?;
    let phase = phase_deg.to_radians();
    let beta = beta_deg.to_radians();
    let k = cb.quantize(phase, beta);
    let z = num_complex::Complex64::from_polar(1.0, phase + beta);
    let hull = cb.hull(1.0);
    let vertices: Vec<[f64; 2]> = (0..cb.size()).map(|i| [cb.point(i).re, cb.point(i).im]).collect();
    let err_deg = ibfd_core::phase_codebook::wrap_phase(phase + beta - cb.phase(k)).to_degrees();
    Ok(json!({
        "index": k,
        "quantized_deg": cb.phase(k).to_degrees(),
        "error_deg": err_deg,
        "bound_deg": 180.0 / cb.size() as f64,
        "vertices": vertices,
        "slacks": hull.slacks(z),
        "point": [z.re, z.im],
    })
    .to_string())
}

fn run_json(problem: &DesignProblem, geom: &ArrayGeometry, d: Designer, dir: SteeringDirection, phi_deg: f64) -> Value {
    let run = run_designer(d, problem, &PipelineConfig::default(), dir);
    let pattern = run.weights.as_ref().map(|w| pattern(geom, w, phi_deg, 181).ok());
    json!({
        "designer": d.name(),
        "status": run.solver_status,
        "gain_db": run.report.as_ref().map(|r| r.gain_db),
        "max_si_dbm": run.report.as_ref().map(|r| r.max_si_dbm),
        "feasible": run.report.as_ref().map(|r| r.feasible),
        "phase_indices": run.weights.as_ref().and_then(|w| w.phase_indices().map(<[usize]>::to_vec)),
        "pattern_db": pattern.flatten(),
    })
}

/// Runs every designer and the exhaustive oracle on the small demo array.
pub fn design_json(theta_deg: f64, phi_deg: f64, bits: u32, pmax_dbm: f64) -> Result<String, String> {
    let geom = build_planar_array(DEMO_ROWS, DEMO_COLS, 0.5, &Partition::LongAxisHalves).map_err(err)?;
    let h = synth_coupling(&geom, DEFAULT_REFERENCE_COUPLING_DB).map_err(err)?;
    let dir = SteeringDirection::from_degrees(theta_deg, phi_deg).map_err(err)?;
    let a = array_response(&geom, Subarray::Tx, &dir);
    let cb = PhaseCodebook::for_power(bits, P_T_MW, geom.num_tx()).map_err(err)?;
    let problem = DesignProblem::new(a, h, P_T_MW, dbm_to_mw(pmax_dbm), cb).map_err(err)?;
    let results: Vec<Value> = Designer::ALL.iter().map(|&d| run_json(&problem, &geom, d, dir, phi_deg)).collect();
    let oracle = match brute_force_oracle(&problem, DEFAULT_ORACLE_CAP) {
        Ok(o) => json!({
            "feasible_count": o.feasible_count,
            "enumerated": o.enumerated,
            "gain_db": o.best_gain_db,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    Ok(json!({ "theta_deg": angles(181), "results": results, "oracle": oracle }).to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn beam_pattern(rows: usize, cols: usize, theta_deg: f64, phi_deg: f64, bits: u32, points: usize) -> Result<String, JsError> {
    to_js(beam_pattern_json(rows, cols, theta_deg, phi_deg, bits, points))
}

#[wasm_bindgen]
pub fn quantize(bits: u32, phase_deg: f64, beta_deg: f64) -> Result<String, JsError> {
    to_js(quantize_json(bits, phase_deg, beta_deg))
}

#[wasm_bindgen]
pub fn design(theta_deg: f64, phi_deg: f64, bits: u32, pmax_dbm: f64) -> Result<String, JsError> {
    to_js(design_json(theta_deg, phi_deg, bits, pmax_dbm))
}
