//! Discrete-phase analog transmit beamforming for in-band full-duplex arrays
//! under per-antenna self-interference limits.
//!
//! The main entry point is [`sdr_designer::design`], which lifts the problem to
//! a semidefinite relaxation with polygon constraints on the lifted entries,
//! refines the solution toward rank one, extracts the principal component, and
//! projects it onto the phase codebook with an optimized common rotation.

pub mod array_model;
pub mod benchmarks;
pub mod conic;
pub mod error;
pub mod evaluation;
pub mod phase_codebook;
pub mod sdr_designer;
pub mod si_channel;

pub use array_model::{array_response, build_planar_array, cbf_weights, ArrayGeometry, Partition, SteeringDirection, Subarray};
pub use error::{ChannelFileError, DesignError, ModelError};
pub use evaluation::{BeamWeights, Designer, EvalReport};
pub use phase_codebook::{rotate_project, PhaseCodebook, PolygonHull};
pub use sdr_designer::{design, DesignProblem, PipelineConfig};
pub use si_channel::ChannelMatrix;
