//! Reference designers: quantized conventional beamforming, an SI-constrained
//! fully digital beamformer, and the relax-then-project sequential method.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::array_model::cbf_weights;
use crate::conic::{self, Cone, ConicProgram, SolveStatus, SolverSettings, SparseRow};
use crate::error::DesignError;
use crate::evaluation::BeamWeights;
use crate::sdr_designer::{continuous_relaxation, extract_principal, DesignProblem, PipelineConfig};

/// Conventional beamformer with every phase rounded to the nearest codebook entry.
pub fn quantized_cbf(problem: &DesignProblem) -> Result<BeamWeights, DesignError> {
    let cbf = cbf_weights(problem.response(), problem.p_t_mw())?;
    Ok(problem.codebook().project(cbf.weights(), 0.0))
}

/// Maximizes `Re(a^* f)` subject to `|H_n f| <= sqrt(P_max)` and `||f||^2 <= P_t`,
/// with unconstrained amplitudes and phases.
pub fn digital_design(problem: &DesignProblem, settings: &SolverSettings) -> Result<BeamWeights, DesignError> {
    let m = problem.num_tx();
    let a = problem.response();
    // variables: g = f / sqrt(P_t), stored as (Re g, Im g)
    let mut p = ConicProgram::new(2 * m);
    for j in 0..m {
        p.objective[j] = -a[j].re;
        p.objective[m + j] = -a[j].im;
    }
    let mut rows: Vec<SparseRow> = vec![Vec::new()];
    rows.extend((0..2 * m).map(|j| vec![(j, -1.0)]));
    let mut rhs = vec![0.0; 2 * m + 1];
    rhs[0] = 1.0;
    p.add_cone(Cone::SecondOrder(2 * m + 1), rows, rhs);
    if problem.p_max_mw().is_finite() {
        let bound = (problem.p_max_mw() / problem.p_t_mw()).sqrt();
        let h = problem.channel().entries();
        for n in 0..h.nrows() {
            // Re(h g) = h_re g_re - h_im g_im ; Im(h g) = h_im g_re + h_re g_im
            let re: SparseRow = (0..m).flat_map(|j| [(j, -h[(n, j)].re), (m + j, h[(n, j)].im)]).collect();
            let im: SparseRow = (0..m).flat_map(|j| [(j, -h[(n, j)].im), (m + j, -h[(n, j)].re)]).collect();
            p.add_cone(Cone::SecondOrder(3), vec![Vec::new(), re, im], vec![bound, 0.0, 0.0]);
        }
    }
    let sol = conic::solve(&p, settings).map_err(DesignError::NumericalFailure)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        SolveStatus::PrimalInfeasible => return Err(DesignError::Infeasible),
        _ => return Err(DesignError::NumericalFailure("digital design did not converge".into())),
    }
    let scale = problem.p_t_mw().sqrt();
    let f = DVector::from_fn(m, |j, _| Complex64::new(sol.x[j], sol.x[m + j]) * scale);
    if f.norm() <= 1e-12 * scale {
        // every direction is nulled: only the zero beam meets the SI limits
        return Err(DesignError::Infeasible);
    }
    Ok(BeamWeights::continuous(f))
}

/// Relaxation without polygon constraints, refinement, extraction, then
/// nearest-phase projection with no rotation.
pub fn sequential_design(problem: &DesignProblem, config: &PipelineConfig) -> Result<BeamWeights, DesignError> {
    let refined = continuous_relaxation(problem, config)?;
    let f = extract_principal(&refined.solution)?;
    Ok(problem.codebook().project(&f, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{array_response, build_planar_array, Partition, SteeringDirection, Subarray};
    use crate::evaluation::{bf_gain_linear, max_si_mw};
    use crate::phase_codebook::PhaseCodebook;
    use crate::si_channel::{random_coupling, ChannelMatrix};
    use nalgebra::DMatrix;

    #[test]
    fn digital_without_limits_is_cbf() {
        let geom = build_planar_array(2, 4, 0.5, &Partition::LongAxisHalves).unwrap();
        let dir = SteeringDirection::from_degrees(20.0, 40.0).unwrap();
        let a = array_response(&geom, Subarray::Tx, &dir);
        let h = ChannelMatrix::new(DMatrix::zeros(0, 4)).unwrap();
        let cb = PhaseCodebook::for_power(3, 1.0, 4).unwrap();
        let p = DesignProblem::new(a.clone(), h, 1.0, f64::INFINITY, cb).unwrap();
        let f = digital_design(&p, &SolverSettings::default()).unwrap();
        assert!((bf_gain_linear(&f, &a).unwrap() - 4.0).abs() < 1e-6);
        assert!((f.total_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn digital_respects_si_limits() {
        let m = 6;
        let a = DVector::from_fn(m, |i, _| Complex64::from_polar(1.0, 0.4 * i as f64));
        let h = random_coupling(3, m, -20.0, 11).unwrap();
        let cb = PhaseCodebook::for_power(2, 1.0, m).unwrap();
        let p_max = 1e-4;
        let p = DesignProblem::new(a, h.clone(), 1.0, p_max, cb).unwrap();
        let f = digital_design(&p, &SolverSettings::default()).unwrap();
        assert!(max_si_mw(&f, &h).unwrap() <= p_max * (1.0 + 1e-6));
    }

    #[test]
    fn boresight_quantized_cbf_is_exact() {
        let a = DVector::from_element(5, Complex64::new(1.0, 0.0));
        let h = random_coupling(2, 5, -30.0, 3).unwrap();
        let cb = PhaseCodebook::for_power(3, 1.0, 5).unwrap();
        let p = DesignProblem::new(a.clone(), h, 1.0, 1.0, cb).unwrap();
        let w = quantized_cbf(&p).unwrap();
        assert!((bf_gain_linear(&w, &a).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(w.phase_indices().unwrap(), &[0, 0, 0, 0, 0]);
    }
}
