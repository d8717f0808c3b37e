//! Localized sequential MCMC (LSMCMC) filtering for high-dimensional
//! state-space models on two-dimensional grids.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds grid geometry, forward models, observation operators and
//!   the transition / likelihood densities.
//! * [`localization`] partitions the grid into blocks, builds halos and
//!   applies Gaspari–Cohn observation-noise tapering.
//! * [`samplers`] draws analysis samples, either exactly from the Gaussian
//!   mixture posterior or with one of four MCMC kernels.
//! * [`filters`] wires everything into assimilation cycles: joint observed-block
//!   localization (V1), halo per-block localization (V2), the unlocalized
//!   SMCMC filter, an LETKF baseline and the exact Kalman filter.
//!
//! All numerical code is generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`, which is what the experiment harness uses.

pub mod error;
pub mod filters;
pub mod linalg;
pub mod localization;
pub mod model;
pub mod rng;
pub mod samplers;
pub mod scalar;

pub use error::{Error, Result};
pub use rng::{Stream, StreamKey, StreamRng};
pub use scalar::Real;

pub use model::GridSpec;

pub type GridState = model::GridState<f64>;
pub type DiagonalCovariance = model::DiagonalCovariance<f64>;
pub type ForwardModel = model::ForwardModel<f64>;
pub type SweParams = model::SweParams<f64>;
pub type NoiseModel = model::NoiseModel<f64>;
pub type ObservationBatch = model::ObservationBatch<f64>;
pub type BlockPartition = localization::BlockPartition<f64>;
pub type Halo = localization::Halo<f64>;
pub type MixtureComponent = samplers::MixtureComponent<f64>;
pub type SharedPosteriorCov = samplers::SharedPosteriorCov<f64>;
pub type ChainState = samplers::ChainState<f64>;
pub type KernelConfig = samplers::KernelConfig<f64>;
pub type EnsembleSet = filters::EnsembleSet<f64>;
pub type FilterConfig = filters::FilterConfig<f64>;
pub type Filter = filters::Filter<f64>;
pub type CycleResult = filters::CycleResult<f64>;
pub type KalmanState = filters::KalmanState<f64>;

/// Single-precision variants, for memory-bound ensembles.
pub type GridState32 = model::GridState<f32>;
pub type ObservationBatch32 = model::ObservationBatch<f32>;
