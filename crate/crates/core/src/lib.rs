//! Numerical laboratory for quantum state diffusion.
//!
//! The crate integrates the nonlinear stochastic state-vector equation of a
//! continuously measured quantum system, checks its ensemble statistics against
//! the Lindblad master equation, and measures phase-space volume: contraction of
//! the state cloud under measurement, and its restoration once independent
//! conjugate momenta are added to the state coordinates.

pub mod ensemble;
pub mod error;
pub mod hilbert;
pub mod lagrangian;
pub mod lindblad;
pub mod noise;
pub mod oscillator;
pub mod propagator;

pub use error::{QsdError, Result};
pub use hilbert::{DensityMatrix, HermitianOperator, StateVector, C64};
pub use noise::{ComplexIncrement, NoiseStream};
pub use propagator::{QsdModel, SchemeKind, StepScheme, TrajectoryRecord};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
