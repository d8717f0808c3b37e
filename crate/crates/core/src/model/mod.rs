//! Grid geometry, forward models, observation operators and densities.

mod covariance;
mod dynamics;
mod grid;
mod observation;

pub use covariance::{add_process_noise, add_process_noise_in_place, transition_logpdf, DiagonalCovariance};
pub use dynamics::{forward_propagate, propagate_values, swe_total_mass, ForwardModel, ModelKind, SweParams};
pub use grid::{GridSpec, GridState};
pub use observation::{
    likelihood_grad, likelihood_grad_into, likelihood_logpdf, NoiseKind, NoiseModel, ObservationBatch,
    ObservationOperator, OperatorKind,
};
