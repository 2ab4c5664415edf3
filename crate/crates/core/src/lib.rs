//! Non-interacting electrons on a ring under continuous, quasi-local position
//! measurement.
//!
//! The ensemble is described by a Lindblad master equation in the momentum
//! basis ([`liouville`]); single realizations by quantum-jump trajectories
//! ([`trajectory`]). Everything numeric is generic over [`Scalar`] (`f32` or
//! `f64`); the `*64` aliases below fix the precision used by the CLI.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fourier;
pub mod liouville;
pub mod model;
pub mod observables;
mod ode;
pub mod scalar;
pub mod state;
pub mod trajectory;

pub use error::{Error, Result};
pub use fourier::Fourier;
pub use liouville::{
    integrate, solve_diagonal_exact, DensityMatrix, DiagonalDistribution, Method, Stepping,
};
pub use model::{AmplitudeTable, ModelConfig, MomentumGrid, Rates};
pub use observables::{correlator_ss, CorrelationSeries, Histogram, PsdOptions, SpectrumSeries};
pub use scalar::Scalar;
pub use state::{Basis, PureState};
pub use trajectory::{run_ensemble, run_trajectory, EnsembleStats, TrajectoryRecord};

pub type ModelConfig64 = ModelConfig<f64>;
pub type AmplitudeTable64 = AmplitudeTable<f64>;
pub type PureState64 = PureState<f64>;
pub type DensityMatrix64 = DensityMatrix<f64>;
pub type TrajectoryRecord64 = TrajectoryRecord<f64>;
pub type CorrelationSeries64 = CorrelationSeries<f64>;
pub type SpectrumSeries64 = SpectrumSeries<f64>;
