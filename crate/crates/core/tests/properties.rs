mod common;

use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use common::{small_geometry, P_T_MW};
use ibfd_core::array_model::{array_response, build_planar_array, cbf_weights, Partition, SteeringDirection, Subarray};
use ibfd_core::benchmarks::{digital_design, quantized_cbf, sequential_design};
use ibfd_core::conic::SolverSettings;
use ibfd_core::evaluation::{
    bf_gain, bf_gain_linear, brute_force_oracle, dbm_to_mw, max_si_mw, mw_to_dbm, si_power_per_antenna_mw,
    BeamWeights,
};
use ibfd_core::phase_codebook::wrap_phase;
use ibfd_core::sdr_designer::{assemble_p3, design, p3_residuals, rank_refine, solve_psd, PsdStatus};
use ibfd_core::si_channel::{load_channel, random_coupling, save_channel, synth_coupling, ChannelMatrix};
use ibfd_core::{rotate_project, DesignProblem, PhaseCodebook, PipelineConfig};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = SteeringDirection> {
    (0.0..1.5f64, 0.0..TAU).prop_map(|(t, p)| SteeringDirection::new(t, p).unwrap())
}

/// `(rows, cols)` with an even long axis along the columns.
fn grid_shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..4).prop_flat_map(|h| (1..2 * h, Just(2 * h)))
}

fn complex_vec(m: usize) -> impl Strategy<Value = DVector<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), m)
        .prop_map(|v| DVector::from_iterator(v.len(), v.into_iter().map(|(re, im)| Complex64::new(re, im))))
}

fn max_abs_hf(h: &ChannelMatrix, f: &BeamWeights) -> f64 {
    (h.entries() * f.weights()).iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
}

/// Small instance on an i.i.d. channel with `P_max` a fraction of the CBF level.
fn random_instance(seed: u64, dir: &SteeringDirection, fraction: f64) -> DesignProblem {
    let geom = small_geometry();
    let h = random_coupling(2, 4, -30.0, seed).unwrap();
    let a = array_response(&geom, Subarray::Tx, dir);
    let cbf = cbf_weights(&a, P_T_MW).unwrap();
    let p_max = fraction * max_si_mw(&cbf, &h).unwrap();
    DesignProblem::new(a, h, P_T_MW, p_max, PhaseCodebook::for_power(2, P_T_MW, 4).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn response_entries_are_unimodular((rows, cols) in grid_shape(), d in 0.2..1.0f64, dir in direction()) {
        let g = build_planar_array(rows, cols, d, &Partition::LongAxisHalves).unwrap();
        for sub in [Subarray::Tx, Subarray::Rx] {
            for v in array_response(&g, sub, &dir).iter() {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cbf_has_full_gain_and_power((rows, cols) in grid_shape(), d in 0.2..1.0f64, dir in direction(), pt in 0.1..1e4f64) {
        let g = build_planar_array(rows, cols, d, &Partition::LongAxisHalves).unwrap();
        let a = array_response(&g, Subarray::Tx, &dir);
        let f = cbf_weights(&a, pt).unwrap();
        let m = a.len() as f64;
        for v in f.weights().iter() {
            prop_assert!((v.norm_sqr() - pt / m).abs() <= 1e-9 * pt / m);
        }
        prop_assert!((f.total_power() - pt).abs() <= 1e-9 * pt);
        prop_assert!((bf_gain_linear(&f, &a).unwrap() - m).abs() <= 1e-9 * m);
    }

    #[test]
    fn mirrored_positions_conjugate_the_response((rows, cols) in grid_shape(), dir in direction()) {
        // negating every position is the same as negating u, i.e. phi -> phi + pi
        let g = build_planar_array(rows, cols, 0.5, &Partition::LongAxisHalves).unwrap();
        let a = array_response(&g, Subarray::Tx, &dir);
        let flipped = SteeringDirection::new(dir.theta(), (dir.phi() + PI).rem_euclid(TAU)).unwrap();
        let b = array_response(&g, Subarray::Tx, &flipped);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x.conj() - y).norm() < 1e-9);
        }
    }

    #[test]
    fn coupling_scales_with_reference_level(db in -60.0..0.0f64) {
        let g = small_geometry();
        let h0 = synth_coupling(&g, db).unwrap();
        let h1 = synth_coupling(&g, db + 10.0).unwrap();
        prop_assert_eq!(&h0, &synth_coupling(&g, db).unwrap());
        for (x, y) in h0.entries().iter().zip(h1.entries().iter()) {
            prop_assert!((y.norm_sqr() - 10.0 * x.norm_sqr()).abs() <= 1e-9 * y.norm_sqr());
        }
    }

    #[test]
    fn channel_file_round_trip_preserves_si(seed in any::<u64>(), f in complex_vec(4)) {
        let h = random_coupling(2, 4, -30.0, seed).unwrap();
        let mut buf = Vec::new();
        save_channel(&h, &mut buf).unwrap();
        let back = load_channel(buf.as_slice()).unwrap();
        let w = BeamWeights::continuous(f);
        prop_assert_eq!(si_power_per_antenna_mw(&w, &h).unwrap(), si_power_per_antenna_mw(&w, &back).unwrap());
    }

    #[test]
    fn quantization_error_is_bounded(bits in 1u32..7, f in complex_vec(8), beta in -10.0..10.0f64) {
        let cb = PhaseCodebook::new(bits, 1.0).unwrap();
        let k = cb.size() as f64;
        let w = cb.project(&f, beta);
        for (v, q) in f.iter().zip(w.weights().iter()) {
            prop_assert!(wrap_phase(v.arg() + beta - q.arg()).abs() <= PI / k + 1e-12);
        }
    }

    #[test]
    fn projection_is_periodic_in_rotation(bits in 1u32..6, f in complex_vec(6), beta in 0.0..TAU, seed in any::<u64>()) {
        let cb = PhaseCodebook::new(bits, 1.0).unwrap();
        let step = cb.spacing();
        let w0 = cb.project(&f, beta);
        let w1 = cb.project(&f, beta + step);
        let rot = Complex64::from_polar(1.0, step);
        // equidistant phases may round either way; skip those draws
        let tie = f.iter().any(|v| {
            let r = (v.arg() + beta).rem_euclid(step) / step;
            (r - 0.5).abs() < 1e-9
        });
        prop_assume!(!tie);
        for (a, b) in w0.weights().iter().zip(w1.weights().iter()) {
            prop_assert!((a * rot - b).norm() < 1e-9);
        }
        let h = random_coupling(3, 6, -30.0, seed).unwrap();
        prop_assert!((max_abs_hf(&h, &w0) - max_abs_hf(&h, &w1)).abs() <= 1e-9 * max_abs_hf(&h, &w0).max(1e-300));
    }

    #[test]
    fn hull_contains_combinations_and_rejects_outside(bits in 1u32..7, r in 0.1..10.0f64, raw in prop::collection::vec(0.0..1.0f64, 64), eps in 1e-6..0.5f64) {
        let cb = PhaseCodebook::new(bits, r).unwrap();
        let hull = cb.hull(r);
        let k = cb.size();
        let total: f64 = raw[..k].iter().sum::<f64>().max(1e-12);
        let z: Complex64 = (0..k).map(|i| cb.point(i) * (raw[i] / total)).sum();
        prop_assert!(hull.contains(z));
        for i in 0..k {
            prop_assert!(!hull.contains(cb.point(i) * (1.0 + eps)));
        }
    }

    #[test]
    fn rotate_project_keeps_element_power(bits in 1u32..6, f in complex_vec(4), seed in any::<u64>(), grid in 1usize..64) {
        let cb = PhaseCodebook::for_power(bits, P_T_MW, 4).unwrap();
        let h = random_coupling(2, 4, -30.0, seed).unwrap();
        let p = rotate_project(&f, &cb, &h, grid).unwrap();
        for v in p.weights.weights().iter() {
            prop_assert!((v.norm_sqr() - P_T_MW / 4.0).abs() <= 1e-12 * P_T_MW);
        }
        prop_assert!((p.weights.total_power() - P_T_MW).abs() <= 1e-9 * P_T_MW);
    }

    #[test]
    fn global_phase_changes_neither_gain_nor_si(f in complex_vec(4), angle in -10.0..10.0f64, seed in any::<u64>(), dir in direction()) {
        prop_assume!(f.norm() > 1e-3);
        let a = array_response(&small_geometry(), Subarray::Tx, &dir);
        let h = random_coupling(2, 4, -30.0, seed).unwrap();
        let w = BeamWeights::continuous(f);
        let r = w.rotated(angle);
        prop_assert!((bf_gain_linear(&w, &a).unwrap() - bf_gain_linear(&r, &a).unwrap()).abs() < 1e-9);
        let (s0, s1) = (si_power_per_antenna_mw(&w, &h).unwrap(), si_power_per_antenna_mw(&r, &h).unwrap());
        for (x, y) in s0.iter().zip(&s1) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-300));
        }
    }

    #[test]
    fn dbm_conversion_round_trips(dbm in -200.0..100.0f64) {
        prop_assert!((mw_to_dbm(dbm_to_mw(dbm)) - dbm).abs() < 1e-9);
    }
}

proptest! {
    // every case solves at least one conic program
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relaxation_never_cuts_off_a_feasible_vector(seed in 0u64..1000, dir in direction(), frac in 0.3..1.2f64) {
        let p = random_instance(seed, &dir, frac);
        let sol = solve_psd(&assemble_p3(&p), &SolverSettings::default()).unwrap();
        let h = p.channel();
        let cb = p.codebook();
        let m = p.num_tx();
        let mut idx = vec![0usize; m];
        let mut any_feasible = false;
        loop {
            let w = BeamWeights::quantized(cb, idx.clone());
            if max_abs_hf(h, &w) <= p.p_max_mw() {
                any_feasible = true;
                let value = -bf_gain_linear(&w, p.response()).unwrap() * P_T_MW;
                prop_assert_eq!(sol.status, PsdStatus::Solved);
                prop_assert!(value >= sol.objective - 1e-5 * sol.objective.abs().max(1.0), "{value} < {}", sol.objective);
            }
            let mut i = 0;
            while i < m && idx[i] + 1 == cb.size() {
                idx[i] = 0;
                i += 1;
            }
            if i == m {
                break;
            }
            idx[i] += 1;
        }
        if sol.status == PsdStatus::Solved {
            let r = p3_residuals(&p, &sol.f);
            prop_assert!(r.diagonal_rel <= 1e-6);
            prop_assert!(r.trace_excess_rel <= 1e-6);
            prop_assert!(r.polygon_excess <= 1e-8 * P_T_MW);
        } else {
            prop_assert!(!any_feasible);
        }
    }

    #[test]
    fn refinement_is_monotone_and_feasible(seed in 0u64..1000, dir in direction(), frac in 0.4..1.0f64) {
        let p = random_instance(seed, &dir, frac);
        let settings = SolverSettings::default();
        let start = solve_psd(&assemble_p3(&p), &settings).unwrap();
        prop_assume!(start.status == PsdStatus::Solved);
        let cfg = PipelineConfig::default();
        let r = rank_refine(&p, &start, &cfg.refine, &settings).unwrap();
        for w in r.trajectory.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        let res = p3_residuals(&p, &r.solution.f);
        prop_assert!(res.diagonal_rel <= 1e-6);
        prop_assert!(res.trace_excess_rel <= 1e-6);
    }

    #[test]
    fn designs_are_codebook_valued_and_ordered(seed in 0u64..1000, dir in direction(), frac in 0.5..1.5f64) {
        let p = random_instance(seed, &dir, frac);
        let cfg = PipelineConfig::default();
        let cb = p.codebook();
        let on_codebook = |w: &BeamWeights| {
            let idx = w.phase_indices().expect("quantized");
            idx.iter().zip(w.weights().iter()).all(|(&k, v)| k < cb.size() && (v - cb.point(k)).norm() == 0.0)
                && (w.total_power() - P_T_MW).abs() <= 1e-9 * P_T_MW
        };
        let qcbf = quantized_cbf(&p).unwrap();
        prop_assert!(on_codebook(&qcbf));
        let cbf = cbf_weights(p.response(), P_T_MW).unwrap();
        let g_cbf = bf_gain(&cbf, p.response()).unwrap();
        prop_assert!(g_cbf >= bf_gain(&qcbf, p.response()).unwrap() - 1e-9);

        if let Ok(seq) = sequential_design(&p, &cfg) {
            prop_assert!(on_codebook(&seq));
        }
        let digital = digital_design(&p, &SolverSettings::default());
        if let Ok(d) = &digital {
            prop_assert!(g_cbf >= bf_gain(d, p.response()).unwrap() - 1e-6);
            prop_assert!(max_si_mw(d, p.channel()).unwrap() <= p.p_max_mw() * (1.0 + 1e-5));
        }
        if let Ok(des) = design(&p, &cfg) {
            prop_assert!(on_codebook(&des.weights));
            let si = max_si_mw(&des.weights, p.channel()).unwrap();
            assert_relative_eq!(mw_to_dbm(si), des.diagnostics.post_projection_max_si_dbm, epsilon = 1e-9);
            if let Ok(d) = &digital {
                prop_assert!(bf_gain(d, p.response()).unwrap() >= bf_gain(&des.weights, p.response()).unwrap() - 1e-6);
            }
            if si <= p.p_max_mw() {
                let oracle = brute_force_oracle(&p, 1 << 20).unwrap();
                let best = oracle.best_gain_db.expect("design is feasible, so the oracle finds one");
                prop_assert!(best >= bf_gain(&des.weights, p.response()).unwrap() - 1e-9);
                let bw = oracle.best.unwrap();
                prop_assert!(max_si_mw(&bw, p.channel()).unwrap() <= p.p_max_mw());
            }
        }
    }
}
