use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use super::config::{FilterConfig, Method};
use super::ensemble::EnsembleSet;
use super::kalman::{kalman_cycle, KalmanState};
use super::lsmcmc::{letkf_cycle, smcmc_cycle, v1_cycle, v2_cycle, CycleInputs, CycleResult, CycleTimings};
use crate::error::{Error, Result};
use crate::localization::{build_partition, BlockPartition};
use crate::model::{add_process_noise_in_place, DiagonalCovariance, ForwardModel, GridSpec, GridState, ObservationBatch};
use crate::rng::{Stream, StreamKey};
use crate::scalar::Real;

/// Initial ensemble: every member is `mean` plus independent `N(0, spread²)`
/// noise. Without a spread all members start at the mean.
#[derive(Clone, Debug)]
pub struct InitialCondition<T> {
    pub mean: GridState<T>,
    pub spread: Option<DiagonalCovariance<T>>,
}

enum FilterState<T> {
    Ensemble(EnsembleSet<T>),
    Kalman(KalmanState<T>),
}

/// One filter run: owns the current ensemble (or Kalman moments) and
/// advances it one assimilation cycle at a time.
pub struct Filter<T> {
    cfg: FilterConfig<T>,
    spec: Arc<GridSpec>,
    model: ForwardModel<T>,
    q: DiagonalCovariance<T>,
    key: StreamKey,
    partitions: HashMap<usize, BlockPartition<T>>,
    state: FilterState<T>,
    cycle: usize,
}

impl<T: Real> Filter<T> {
    /// `key` fixes the seed and replicate; cycle, stream and id are set
    /// internally.
    pub fn new(
        cfg: FilterConfig<T>,
        spec: Arc<GridSpec>,
        model: ForwardModel<T>,
        q: DiagonalCovariance<T>,
        init: &InitialCondition<T>,
        key: StreamKey,
    ) -> Result<Self> {
        cfg.validate()?;
        model.validate(&spec)?;
        let dim = spec.dim();
        if q.len() != dim {
            return Err(Error::Dimension {
                what: "process noise",
                expected: dim,
                got: q.len(),
            });
        }
        if init.mean.values.len() != dim {
            return Err(Error::Dimension {
                what: "initial mean",
                expected: dim,
                got: init.mean.values.len(),
            });
        }
        if let Some(s) = &init.spread {
            if s.len() != dim {
                return Err(Error::Dimension {
                    what: "initial spread",
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        let mut partitions = HashMap::new();
        if matches!(cfg.method, Method::LsmcmcV1 | Method::LsmcmcV2) {
            for g in cfg.partition.all() {
                if let std::collections::hash_map::Entry::Vacant(e) = partitions.entry(g) {
                    e.insert(build_partition(spec.clone(), g)?);
                }
            }
        }
        let state = if cfg.method == Method::Kf {
            let var = match &init.spread {
                Some(s) => (0..dim).map(|i| s.var(i)).collect(),
                None => vec![T::zero(); dim],
            };
            FilterState::Kalman(KalmanState::new(init.mean.values.clone(), var)?)
        } else {
            let members: Vec<Vec<T>> = (0..cfg.n_forecast)
                .map(|j| {
                    let mut v = init.mean.values.clone();
                    if let Some(s) = &init.spread {
                        let mut rng = key.stream(Stream::InitialPerturbation).id(j as u64).rng();
                        add_process_noise_in_place(&mut v, s, &mut rng)?;
                    }
                    Ok(v)
                })
                .collect::<Result<_>>()?;
            FilterState::Ensemble(EnsembleSet::from_values(&spec, members, init.mean.time_index))
        };
        Ok(Self {
            cfg,
            spec,
            model,
            q,
            key: key.cycle(0).id(0).sub(0),
            partitions,
            state,
            cycle: init.mean.time_index,
        })
    }

    pub fn config(&self) -> &FilterConfig<T> {
        &self.cfg
    }

    /// Index of the last completed cycle (0 before the first).
    pub fn cycle_index(&self) -> usize {
        self.cycle
    }

    pub fn mean(&self) -> GridState<T> {
        match &self.state {
            FilterState::Ensemble(e) => e.mean(),
            FilterState::Kalman(k) => GridState {
                spec: self.spec.clone(),
                values: k.mean.clone(),
                time_index: self.cycle,
            },
        }
    }

    /// Current ensemble; for the Kalman filter, the single member at the mean.
    pub fn ensemble(&self) -> EnsembleSet<T> {
        match &self.state {
            FilterState::Ensemble(e) => e.clone(),
            FilterState::Kalman(k) => EnsembleSet::from_values(&self.spec, vec![k.mean.clone()], self.cycle),
        }
    }

    pub fn kalman_state(&self) -> Option<&KalmanState<T>> {
        match &self.state {
            FilterState::Kalman(k) => Some(k),
            FilterState::Ensemble(_) => None,
        }
    }

    /// Forecast to the next cycle and assimilate `batch` there. `None` or an
    /// empty batch gives a pure forecast.
    pub fn cycle(&mut self, batch: Option<&ObservationBatch<T>>) -> Result<CycleResult<T>> {
        let k = self.cycle + 1;
        let out = self.step(k, batch).map_err(|e| Error::AtCycle {
            cycle: k,
            source: Box::new(e),
        })?;
        self.cycle = k;
        Ok(out)
    }

    fn step(&mut self, k: usize, batch: Option<&ObservationBatch<T>>) -> Result<CycleResult<T>> {
        if let Some(b) = batch {
            b.validate_for(self.spec.dim())?;
        }
        let ens = match &self.state {
            FilterState::Kalman(s) => {
                let t0 = Instant::now();
                let next = kalman_cycle(s, batch, &self.model, &self.q)?;
                let mean = next.mean.clone();
                self.state = FilterState::Kalman(next);
                return Ok(CycleResult {
                    cycle: k,
                    analysis_mean: GridState {
                        spec: self.spec.clone(),
                        values: mean.clone(),
                        time_index: k,
                    },
                    ensemble: EnsembleSet::from_values(&self.spec, vec![mean], k),
                    diagnostics: Vec::new(),
                    timings: CycleTimings {
                        sample_ms: t0.elapsed().as_secs_f64() * 1e3,
                        ..CycleTimings::default()
                    },
                    observed_blocks: 0,
                    sampled_dim: self.spec.dim(),
                });
            }
            FilterState::Ensemble(e) => e,
        };
        let inputs = CycleInputs {
            cfg: &self.cfg,
            model: &self.model,
            q: &self.q,
            key: self.key.cycle(k as u64),
            cycle: k,
        };
        let out = match self.cfg.method {
            Method::LsmcmcV1 => v1_cycle(ens, batch, &inputs, &self.partitions[&self.cfg.partition.gamma(k)])?,
            Method::LsmcmcV2 => v2_cycle(ens, batch, &inputs, &self.partitions[&self.cfg.partition.gamma(k)])?,
            Method::Smcmc => smcmc_cycle(ens, batch, &inputs)?,
            Method::Letkf => letkf_cycle(ens, batch, &inputs)?,
            Method::Kf => unreachable!(),
        };
        self.state = FilterState::Ensemble(out.ensemble.clone());
        Ok(out)
    }
}

/// Analysis means of `M` independent runs and their average.
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    /// `mean[k − 1]` is the replicate-averaged analysis mean at cycle `k`.
    pub mean: Vec<GridState<T>>,
    /// `per_run[r][k − 1]` is run `r`'s analysis mean at cycle `k`.
    pub per_run: Vec<Vec<GridState<T>>>,
}

/// Runs `cfg.m_runs` replicates over `batches` (entry `k − 1` is assimilated
/// at cycle `k`). Replicate `r` uses `StreamKey::new(seed, ..).replicate(r)`.
/// `on_cycle(r, result)` sees every cycle of every run.
#[allow(clippy::too_many_arguments)]
pub fn run_filter<T: Real, F>(
    cfg: &FilterConfig<T>,
    spec: Arc<GridSpec>,
    model: &ForwardModel<T>,
    q: &DiagonalCovariance<T>,
    init: &InitialCondition<T>,
    batches: &[Option<ObservationBatch<T>>],
    seed: u64,
    mut on_cycle: F,
) -> Result<RunOutput<T>>
where
    F: FnMut(usize, &CycleResult<T>) -> Result<()>,
{
    cfg.validate()?;
    let mut per_run = Vec::with_capacity(cfg.m_runs);
    for r in 0..cfg.m_runs {
        let key = StreamKey::new(seed, Stream::Sampler).replicate(r as u64);
        let mut filter = Filter::new(cfg.clone(), spec.clone(), model.clone(), q.clone(), init, key)?;
        let mut means = Vec::with_capacity(batches.len());
        for b in batches {
            let out = filter.cycle(b.as_ref())?;
            on_cycle(r, &out)?;
            means.push(out.analysis_mean);
        }
        per_run.push(means);
    }
    let inv = T::one() / T::from_usize(cfg.m_runs).unwrap();
    let mean = (0..batches.len())
        .map(|k| {
            let mut acc = vec![T::zero(); spec.dim()];
            for run in &per_run {
                for (a, &x) in acc.iter_mut().zip(&run[k].values) {
                    *a = *a + x;
                }
            }
            acc.iter_mut().for_each(|a| *a = *a * inv);
            GridState {
                spec: spec.clone(),
                values: acc,
                time_index: run_time(&per_run, k),
            }
        })
        .collect();
    Ok(RunOutput { mean, per_run })
}

fn run_time<T>(per_run: &[Vec<GridState<T>>], k: usize) -> usize {
    per_run[0][k].time_index
}
