#![allow(dead_code)]

use std::io::Write;

use ibfd_core::array_model::{array_response, build_planar_array, cbf_weights, ArrayGeometry, Partition, SteeringDirection, Subarray};
use ibfd_core::evaluation::{dbm_to_mw, max_si_mw};
use ibfd_core::si_channel::{synth_coupling, ChannelMatrix, DEFAULT_REFERENCE_COUPLING_DB};
use ibfd_core::{DesignProblem, PhaseCodebook};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 30 dBm.
pub const P_T_MW: f64 = 1000.0;

/// 2 x 3 grid, left column receives: N = 2, M = 4.
pub fn small_geometry() -> ArrayGeometry {
    build_planar_array(2, 3, 0.5, &Partition::Explicit { tx: vec![1, 2, 4, 5], rx: vec![0, 3] }).unwrap()
}

pub struct Instance {
    pub seed: u64,
    pub direction: SteeringDirection,
    pub problem: DesignProblem,
}

/// Default synthetic channel on the small grid; the seed picks the steering
/// direction and `P_max` is half the conventional beamformer's max SI.
pub fn small_instance(seed: u64) -> Instance {
    let geom = small_geometry();
    let h = synth_coupling(&geom, DEFAULT_REFERENCE_COUPLING_DB).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let direction = SteeringDirection::from_degrees(rng.random_range(0.0..60.0), rng.random_range(0.0..360.0)).unwrap();
    let a = array_response(&geom, Subarray::Tx, &direction);
    let cbf = cbf_weights(&a, P_T_MW).unwrap();
    let p_max = 0.5 * max_si_mw(&cbf, &h).unwrap();
    let cb = PhaseCodebook::for_power(2, P_T_MW, 4).unwrap();
    Instance { seed, direction, problem: DesignProblem::new(a, h, P_T_MW, p_max, cb).unwrap() }
}

pub fn small_instances() -> Vec<Instance> {
    (0..20).map(small_instance).collect()
}

pub fn reference_channel() -> (ArrayGeometry, ChannelMatrix) {
    let geom = ArrayGeometry::reference();
    let h = synth_coupling(&geom, DEFAULT_REFERENCE_COUPLING_DB).unwrap();
    (geom, h)
}

pub fn reference_problem(bits: u32, p_max_dbm: f64, direction: &SteeringDirection) -> DesignProblem {
    let (geom, h) = reference_channel();
    let a = array_response(&geom, Subarray::Tx, direction);
    let cb = PhaseCodebook::for_power(bits, P_T_MW, geom.num_tx()).unwrap();
    DesignProblem::new(a, h, P_T_MW, dbm_to_mw(p_max_dbm), cb).unwrap()
}

/// Writes straight to stderr so the line shows even when output is captured.
pub fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion:2} [{verdict}] {title}: {detail}");
}
