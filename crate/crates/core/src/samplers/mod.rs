//! Analysis samplers: exact Gaussian-mixture draws for the linear-Gaussian
//! case and four MCMC kernels for everything else.

mod adapt;
mod chains;
mod kernels;
mod mixture;
mod target;

pub use adapt::robbins_monro_update;
pub use chains::{run_chains, ChainDiagnostics, ChainOutput, KernelConfig, KernelKind};
pub use kernels::{hmc_step, leapfrog, mala_drift, mala_step, pcn_step, rwm_step};
pub use mixture::{mixture_from_forecast, mixture_sample, MixtureComponent, SharedPosteriorCov};
pub use target::{gibbs_ancestor, ChainState, Target};
