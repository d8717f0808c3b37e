use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::KernelConfig;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint observed-block localization.
    LsmcmcV1,
    /// Halo-based per-block localization.
    LsmcmcV2,
    /// Unlocalized sequential MCMC.
    Smcmc,
    Letkf,
    /// Exact Kalman filter (linear-Gaussian models only).
    Kf,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::LsmcmcV1 => "lsmcmc_v1",
            Method::LsmcmcV2 => "lsmcmc_v2",
            Method::Smcmc => "smcmc",
            Method::Letkf => "letkf",
            Method::Kf => "kf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Inflation<T> {
    None,
    /// Relaxation to prior spread with weight α.
    Rtps(T),
    /// Relaxation to prior perturbations with weight α.
    Rtpp(T),
    /// Covariance inflation factor α ≥ 1 on forecast perturbations.
    Multiplicative(T),
}

/// How `N_a` analysis samples become `N_f` forecast members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceStrategy {
    /// Random permutation, then the mean of each of `N_f` equal groups.
    GroupMean,
    /// Every `(N_a/N_f)`-th sample.
    Thin,
}

/// Block count per cycle.
#[derive(Clone, Debug, PartialEq)]
pub enum PartitionSchedule {
    Static(usize),
    /// Cycle `k` (1-based) uses entry `(k − 1) mod len`.
    PerCycle(Vec<usize>),
}

impl PartitionSchedule {
    pub fn gamma(&self, cycle: usize) -> usize {
        match self {
            PartitionSchedule::Static(g) => *g,
            PartitionSchedule::PerCycle(list) => list[(cycle.max(1) - 1) % list.len()],
        }
    }

    pub fn all(&self) -> Vec<usize> {
        match self {
            PartitionSchedule::Static(g) => vec![*g],
            PartitionSchedule::PerCycle(list) => list.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig<T> {
    pub method: Method,
    /// MCMC kernel; required whenever the analysis is not linear-Gaussian.
    pub kernel: Option<KernelConfig<T>>,
    /// Use exact mixture sampling when the batch is linear-Gaussian.
    pub direct_when_possible: bool,
    pub partition: PartitionSchedule,
    pub r_h: T,
    pub n_forecast: usize,
    pub n_analysis: usize,
    pub m_runs: usize,
    pub inflation: Inflation<T>,
    pub letkf_loc_scale: T,
    pub reduce: ReduceStrategy,
    /// Global state index whose chain trace is recorded, when it is sampled.
    pub trace_index: Option<usize>,
}

impl<T: Real> FilterConfig<T> {
    pub fn new(method: Method, n_forecast: usize, n_analysis: usize) -> Self {
        Self {
            method,
            kernel: None,
            direct_when_possible: true,
            partition: PartitionSchedule::Static(1),
            r_h: T::one(),
            n_forecast,
            n_analysis,
            m_runs: 1,
            inflation: Inflation::None,
            letkf_loc_scale: T::one(),
            reduce: ReduceStrategy::GroupMean,
            trace_index: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m_runs == 0 {
            return bad("m_runs must be at least 1".into());
        }
        if self.method == Method::Kf {
            return Ok(());
        }
        if self.n_forecast == 0 {
            return bad("n_forecast must be at least 1".into());
        }
        match self.method {
            Method::Letkf => {
                if self.n_forecast < 2 {
                    return bad("LETKF needs at least 2 members".into());
                }
                if !(self.letkf_loc_scale > T::zero()) {
                    return bad("letkf localization scale must be positive".into());
                }
                match self.inflation {
                    Inflation::Multiplicative(a) if !(a > T::zero()) => {
                        return bad("multiplicative inflation must be positive".into())
                    }
                    Inflation::Rtps(a) | Inflation::Rtpp(a) if !(a >= T::zero()) => {
                        return bad("relaxation weight must be non-negative".into())
                    }
                    _ => {}
                }
                return Ok(());
            }
            Method::Smcmc => {
                if self.n_analysis != self.n_forecast {
                    return bad(format!(
                        "smcmc uses N = N_f = N_a, got N_f = {} and N_a = {}",
                        self.n_forecast, self.n_analysis
                    ));
                }
                if self.kernel.is_none() {
                    return bad("smcmc needs an MCMC kernel".into());
                }
            }
            Method::LsmcmcV1 | Method::LsmcmcV2 => {
                if self.n_analysis < self.n_forecast {
                    return bad(format!(
                        "n_analysis ({}) must be at least n_forecast ({})",
                        self.n_analysis, self.n_forecast
                    ));
                }
                if !self.n_analysis.is_multiple_of(self.n_forecast) {
                    return bad(format!(
                        "n_forecast ({}) must divide n_analysis ({}) so samples reduce into equal groups",
                        self.n_forecast, self.n_analysis
                    ));
                }
                if self.partition.all().contains(&0) {
                    return bad("block count must be at least 1".into());
                }
                if self.method == Method::LsmcmcV2 && !(self.r_h > T::zero()) {
                    return bad("V2 needs a positive halo radius r_h".into());
                }
                if matches!(self.inflation, Inflation::Rtpp(_) | Inflation::Multiplicative(_)) {
                    return bad("LSMCMC filters support only RTPS inflation".into());
                }
            }
            Method::Kf => unreachable!(),
        }
        if let Inflation::Rtps(a) = self.inflation {
            if !(a >= T::zero()) {
                return bad("RTPS weight must be non-negative".into());
            }
        }
        if let Some(k) = &self.kernel {
            let mut k = k.clone();
            k.n_analysis = self.n_analysis;
            k.validate()?;
        }
        Ok(())
    }

    /// The kernel with `N_a` taken from the filter.
    pub(crate) fn effective_kernel(&self) -> Option<KernelConfig<T>> {
        self.kernel.clone().map(|mut k| {
            k.n_analysis = self.n_analysis;
            k
        })
    }
}
