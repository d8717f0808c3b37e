//! Assimilation cycles and the filter driver.

mod config;
mod driver;
mod ensemble;
mod kalman;
mod letkf;
mod lsmcmc;

pub use config::{FilterConfig, Inflation, Method, PartitionSchedule, ReduceStrategy};
pub use driver::{run_filter, Filter, InitialCondition, RunOutput};
pub use ensemble::{reduce_samples, EnsembleSet};
pub use kalman::{kalman_cycle, KalmanState};
pub use letkf::{letkf_analysis, obs_space_perturbations};
pub use lsmcmc::{letkf_cycle, smcmc_cycle, v1_cycle, v2_cycle, CycleInputs, CycleResult, CycleTimings, SamplerRecord};
