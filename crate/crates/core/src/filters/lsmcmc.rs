use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FilterConfig, Inflation};
use super::ensemble::{mean_of, reduce_samples, relax_spread, std_of, EnsembleSet};
use crate::error::{Error, Result};
use crate::localization::{build_halo, observed_blocks, BlockPartition, ObsIndex};
use crate::model::{add_process_noise_in_place, propagate_values, DiagonalCovariance, ForwardModel, GridState, ObservationBatch};
use crate::rng::{Stream, StreamKey};
use crate::samplers::{mixture_from_forecast, mixture_sample, run_chains, ChainDiagnostics, Target};
use crate::scalar::Real;

/// Wall-clock time per phase of a cycle, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleTimings {
    pub forecast_ms: f64,
    pub build_ms: f64,
    pub sample_ms: f64,
    pub reduce_ms: f64,
}

/// Chain diagnostics tagged with the block that produced them (V2 only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub block: Option<usize>,
    #[serde(flatten)]
    pub chain: ChainDiagnostics,
}

#[derive(Clone, Debug)]
pub struct CycleResult<T> {
    pub cycle: usize,
    pub analysis_mean: GridState<T>,
    pub ensemble: EnsembleSet<T>,
    pub diagnostics: Vec<SamplerRecord>,
    pub timings: CycleTimings,
    /// Number of blocks updated (V1, V2) or 1 for unlocalized updates.
    pub observed_blocks: usize,
    /// Dimension of the sampled state (`|x̄|` for V1, summed over blocks for V2).
    pub sampled_dim: usize,
}

/// Read-only inputs shared by every cycle function.
pub struct CycleInputs<'a, T> {
    pub cfg: &'a FilterConfig<T>,
    pub model: &'a ForwardModel<T>,
    pub q: &'a DiagonalCovariance<T>,
    /// Key with seed, replicate and cycle already set.
    pub key: StreamKey,
    pub cycle: usize,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Deterministic forecasts `μ^{(j)} = Φ(Z^{(j)})` and their noised versions
/// `Z̃^{(j)} = μ^{(j)} + W^{(j)}`.
pub(crate) fn forecast<T: Real>(ens: &EnsembleSet<T>, inputs: &CycleInputs<'_, T>) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let spec = ens.spec();
    let pairs: Vec<Result<(Vec<T>, Vec<T>)>> = ens
        .members
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            let mut mu = m.values.clone();
            propagate_values(spec, &mut mu, inputs.model)?;
            let mut z = mu.clone();
            let mut rng = inputs.key.stream(Stream::ForecastNoise).id(j as u64).rng();
            add_process_noise_in_place(&mut z, inputs.q, &mut rng)?;
            Ok((mu, z))
        })
        .collect();
    let mut means = Vec::with_capacity(pairs.len());
    let mut noised = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (mu, z) = p?;
        means.push(mu);
        noised.push(z);
    }
    Ok((means, noised))
}

/// Observations on coordinates without process noise cannot be assimilated
/// by the sampling filters: the transition density there is degenerate.
pub(crate) fn check_observed_coords_active<T: Real>(batch: &ObservationBatch<T>, q: &DiagonalCovariance<T>) -> Result<()> {
    if let Some(&i) = batch.operator.indices.iter().find(|&&i| i >= q.len() || !q.is_active(i)) {
        return Err(Error::Config(format!(
            "observation on state index {i}, which has no process noise, cannot be assimilated"
        )));
    }
    Ok(())
}

fn pure_forecast<T: Real>(
    ens: &EnsembleSet<T>,
    noised: Vec<Vec<T>>,
    cycle: usize,
    mut timings: CycleTimings,
    t0: Instant,
) -> CycleResult<T> {
    let spec = ens.spec().clone();
    let mean = mean_of(&noised);
    timings.forecast_ms = ms(t0);
    CycleResult {
        cycle,
        analysis_mean: GridState {
            spec: spec.clone(),
            values: mean,
            time_index: cycle,
        },
        ensemble: EnsembleSet::from_values(&spec, noised, cycle),
        diagnostics: Vec::new(),
        timings,
        observed_blocks: 0,
        sampled_dim: 0,
    }
}

struct LocalDraw<T> {
    samples: Vec<Vec<T>>,
    diagnostics: Vec<ChainDiagnostics>,
}

/// Draws `N_a` samples from the local target, directly when the batch is
/// linear-Gaussian and the config allows it, by MCMC otherwise.
#[allow(clippy::too_many_arguments)]
fn sample_local<T: Real>(
    cfg: &FilterConfig<T>,
    means: &[Vec<T>],
    q: &DiagonalCovariance<T>,
    batch: &ObservationBatch<T>,
    inits: &[Vec<T>],
    key: StreamKey,
    force_mcmc: bool,
    trace: Option<usize>,
) -> Result<LocalDraw<T>> {
    if !force_mcmc && cfg.direct_when_possible && batch.is_linear_gaussian() {
        let (components, cov) = mixture_from_forecast(means, q, batch)?;
        let mut rng = key.stream(Stream::Sampler).rng();
        return Ok(LocalDraw {
            samples: mixture_sample(&components, &cov, cfg.n_analysis, &mut rng),
            diagnostics: Vec::new(),
        });
    }
    let Some(mut kernel) = cfg.effective_kernel() else {
        return Err(Error::Config(
            "observations are not linear-Gaussian (or direct sampling is off) and no MCMC kernel is configured".into(),
        ));
    };
    kernel.trace_coord = trace;
    let target = Target::new(means, q, batch)?;
    let n_f = means.len();
    let chain_inits: Vec<(Vec<T>, usize)> = (0..kernel.chains).map(|p| (inits[p % n_f].clone(), p % n_f)).collect();
    let out = run_chains(&kernel, &target, &chain_inits, key.stream(Stream::Chain))?;
    Ok(LocalDraw {
        samples: out.samples,
        diagnostics: out.diagnostics,
    })
}

fn local_position(coords: &[usize], global: Option<usize>) -> Option<usize> {
    global.and_then(|g| coords.iter().position(|&c| c == g))
}

fn gather<T: Real>(rows: &[Vec<T>], idx: &[usize]) -> Vec<Vec<T>> {
    rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect()
}

fn rtps_weight<T: Real>(cfg: &FilterConfig<T>) -> Option<T> {
    match cfg.inflation {
        Inflation::Rtps(a) if a > T::zero() => Some(a),
        _ => None,
    }
}

/// Joint observed-block localization: one sampling problem over every
/// coordinate of every observed block.
pub fn v1_cycle<T: Real>(
    ens: &EnsembleSet<T>,
    batch: Option<&ObservationBatch<T>>,
    inputs: &CycleInputs<'_, T>,
    partition: &BlockPartition<T>,
) -> Result<CycleResult<T>> {
    let t0 = Instant::now();
    let mut timings = CycleTimings::default();
    let (mu, noised) = forecast(ens, inputs)?;
    let Some(batch) = batch.filter(|b| !b.is_empty()) else {
        return Ok(pure_forecast(ens, noised, inputs.cycle, timings, t0));
    };
    timings.forecast_ms = ms(t0);

    let t1 = Instant::now();
    let spec = ens.spec().clone();
    batch.validate_for(spec.dim())?;
    check_observed_coords_active(batch, inputs.q)?;
    let blocks = observed_blocks(partition, batch, None);
    let cells: Vec<usize> = blocks.iter().flat_map(|&b| partition.blocks[b].iter().copied()).collect();
    let xbar: Vec<usize> = spec
        .indices_of_cells(&cells)
        .into_iter()
        .filter(|&i| inputs.q.is_active(i))
        .collect();
    let mut local_of = vec![usize::MAX; spec.dim()];
    for (p, &i) in xbar.iter().enumerate() {
        local_of[i] = p;
    }
    let all_obs: Vec<usize> = (0..batch.len()).collect();
    let local_batch = batch.localize(&all_obs, |i| local_of[i], batch.noise.scales.clone());
    let local_means = gather(&mu, &xbar);
    let local_noised = gather(&noised, &xbar);
    let q_local = inputs.q.restrict(&xbar);
    timings.build_ms = ms(t1);

    let t2 = Instant::now();
    let trace = local_position(&xbar, inputs.cfg.trace_index);
    let draw = sample_local(inputs.cfg, &local_means, &q_local, &local_batch, &local_noised, inputs.key, false, trace)?;
    timings.sample_ms = ms(t2);

    let t3 = Instant::now();
    let sample_mean = mean_of(&draw.samples);
    let mut reduced = reduce_samples(
        draw.samples,
        inputs.cfg.n_forecast,
        inputs.cfg.reduce,
        &mut inputs.key.stream(Stream::Reduce).rng(),
    )?;
    if let Some(alpha) = rtps_weight(inputs.cfg) {
        let prior_mean = mean_of(&local_noised);
        relax_spread(&mut reduced, &std_of(&local_noised, &prior_mean), alpha);
    }
    let mut mean = mean_of(&noised);
    for (p, &i) in xbar.iter().enumerate() {
        mean[i] = sample_mean[p];
    }
    let mut members = noised;
    for (m, r) in members.iter_mut().zip(&reduced) {
        for (p, &i) in xbar.iter().enumerate() {
            m[i] = r[p];
        }
    }
    timings.reduce_ms = ms(t3);

    Ok(CycleResult {
        cycle: inputs.cycle,
        analysis_mean: GridState {
            spec: spec.clone(),
            values: mean,
            time_index: inputs.cycle,
        },
        ensemble: EnsembleSet::from_values(&spec, members, inputs.cycle),
        diagnostics: draw
            .diagnostics
            .into_iter()
            .map(|chain| SamplerRecord { block: None, chain })
            .collect(),
        timings,
        observed_blocks: blocks.len(),
        sampled_dim: xbar.len(),
    })
}

struct BlockUpdate<T> {
    coords: Vec<usize>,
    reduced: Vec<Vec<T>>,
    mean: Vec<T>,
    diagnostics: Vec<ChainDiagnostics>,
    sampled_dim: usize,
}

/// Halo-based per-block localization: independent local problems per
/// observed block, each with Gaspari–Cohn-tapered observation noise.
pub fn v2_cycle<T: Real>(
    ens: &EnsembleSet<T>,
    batch: Option<&ObservationBatch<T>>,
    inputs: &CycleInputs<'_, T>,
    partition: &BlockPartition<T>,
) -> Result<CycleResult<T>> {
    let t0 = Instant::now();
    let mut timings = CycleTimings::default();
    let (mu, noised) = forecast(ens, inputs)?;
    let Some(batch) = batch.filter(|b| !b.is_empty()) else {
        return Ok(pure_forecast(ens, noised, inputs.cycle, timings, t0));
    };
    timings.forecast_ms = ms(t0);

    let t1 = Instant::now();
    let spec = ens.spec().clone();
    batch.validate_for(spec.dim())?;
    check_observed_coords_active(batch, inputs.q)?;
    let cfg = inputs.cfg;
    let r_h = cfg.r_h;
    let blocks = observed_blocks(partition, batch, Some(r_h));
    let index = ObsIndex::new(&spec, batch);
    let direct = cfg.direct_when_possible && batch.is_linear_gaussian();
    let alpha = rtps_weight(cfg);
    timings.build_ms = ms(t1);

    let t2 = Instant::now();
    let updates: Vec<Result<BlockUpdate<T>>> = blocks
        .par_iter()
        .map(|&b| {
            let key = inputs.key.id(b as u64);
            let halo = build_halo(partition, b, batch, &index, r_h)?;
            let block_coords: Vec<usize> = spec
                .indices_of_cells(&partition.blocks[b])
                .into_iter()
                .filter(|&i| inputs.q.is_active(i))
                .collect();
            let mut coords = block_coords.clone();
            if direct {
                // halo-only coordinates enter only through observations on them
                let mut extra: Vec<usize> = halo
                    .local_obs
                    .iter()
                    .map(|&o| batch.operator.indices[o])
                    .filter(|i| block_coords.binary_search(i).is_err())
                    .collect();
                extra.sort_unstable();
                extra.dedup();
                coords.extend(extra);
            } else {
                let halo_coords: Vec<usize> = spec
                    .indices_of_cells(&halo.halo_cells)
                    .into_iter()
                    .filter(|&i| inputs.q.is_active(i) && block_coords.binary_search(&i).is_err())
                    .collect();
                coords.extend(halo_coords);
            }
            let mut lookup: Vec<(usize, usize)> = coords.iter().enumerate().map(|(p, &i)| (i, p)).collect();
            lookup.sort_unstable();
            let local_of = |i: usize| lookup[lookup.binary_search_by_key(&i, |&(g, _)| g).expect("observed coordinate in halo")].1;
            let local_batch = batch.localize(&halo.local_obs, local_of, halo.tapered_scales.clone());
            let local_means = gather(&mu, &coords);
            let local_noised = gather(&noised, &coords);
            let q_local = inputs.q.restrict(&coords);
            let trace = local_position(&block_coords, cfg.trace_index);
            let draw = sample_local(cfg, &local_means, &q_local, &local_batch, &local_noised, key, !direct, trace)?;

            let n_block = block_coords.len();
            let kept: Vec<Vec<T>> = draw
                .samples
                .into_iter()
                .map(|mut s| {
                    s.truncate(n_block);
                    s
                })
                .collect();
            let mean = mean_of(&kept);
            let mut reduced = reduce_samples(kept, cfg.n_forecast, cfg.reduce, &mut key.stream(Stream::Reduce).rng())?;
            if let Some(a) = alpha {
                let prior: Vec<Vec<T>> = local_noised.iter().map(|r| r[..n_block].to_vec()).collect();
                let prior_mean = mean_of(&prior);
                relax_spread(&mut reduced, &std_of(&prior, &prior_mean), a);
            }
            Ok(BlockUpdate {
                coords: block_coords,
                reduced,
                mean,
                diagnostics: draw.diagnostics,
                sampled_dim: coords.len(),
            })
        })
        .collect();
    timings.sample_ms = ms(t2);

    let t3 = Instant::now();
    let mut mean = mean_of(&noised);
    let mut members = noised;
    let mut diagnostics = Vec::new();
    let mut sampled_dim = 0;
    for (u, &b) in updates.into_iter().zip(&blocks) {
        let u = u?;
        for (p, &i) in u.coords.iter().enumerate() {
            mean[i] = u.mean[p];
            for (m, r) in members.iter_mut().zip(&u.reduced) {
                m[i] = r[p];
            }
        }
        sampled_dim += u.sampled_dim;
        diagnostics.extend(u.diagnostics.into_iter().map(|chain| SamplerRecord { block: Some(b), chain }));
    }
    timings.reduce_ms = ms(t3);

    Ok(CycleResult {
        cycle: inputs.cycle,
        analysis_mean: GridState {
            spec: spec.clone(),
            values: mean,
            time_index: inputs.cycle,
        },
        ensemble: EnsembleSet::from_values(&spec, members, inputs.cycle),
        diagnostics,
        timings,
        observed_blocks: blocks.len(),
        sampled_dim,
    })
}

/// Unlocalized sequential MCMC: one chain population over the full state,
/// whose `N = N_f = N_a` pooled samples become the new ensemble.
pub fn smcmc_cycle<T: Real>(
    ens: &EnsembleSet<T>,
    batch: Option<&ObservationBatch<T>>,
    inputs: &CycleInputs<'_, T>,
) -> Result<CycleResult<T>> {
    let t0 = Instant::now();
    let mut timings = CycleTimings::default();
    let (mu, noised) = forecast(ens, inputs)?;
    let Some(batch) = batch.filter(|b| !b.is_empty()) else {
        return Ok(pure_forecast(ens, noised, inputs.cycle, timings, t0));
    };
    timings.forecast_ms = ms(t0);

    let t1 = Instant::now();
    let spec = ens.spec().clone();
    batch.validate_for(spec.dim())?;
    check_observed_coords_active(batch, inputs.q)?;
    let coords: Vec<usize> = (0..spec.dim()).filter(|&i| inputs.q.is_active(i)).collect();
    let mut local_of = vec![usize::MAX; spec.dim()];
    for (p, &i) in coords.iter().enumerate() {
        local_of[i] = p;
    }
    let all_obs: Vec<usize> = (0..batch.len()).collect();
    let local_batch = batch.localize(&all_obs, |i| local_of[i], batch.noise.scales.clone());
    let local_means = gather(&mu, &coords);
    let local_noised = gather(&noised, &coords);
    let q_local = inputs.q.restrict(&coords);
    timings.build_ms = ms(t1);

    let t2 = Instant::now();
    let trace = local_position(&coords, inputs.cfg.trace_index);
    let draw = sample_local(inputs.cfg, &local_means, &q_local, &local_batch, &local_noised, inputs.key, true, trace)?;
    timings.sample_ms = ms(t2);

    let sample_mean = mean_of(&draw.samples);
    let mut mean = mean_of(&noised);
    let mut members = noised;
    for (m, s) in members.iter_mut().zip(&draw.samples) {
        for (p, &i) in coords.iter().enumerate() {
            m[i] = s[p];
        }
    }
    for (p, &i) in coords.iter().enumerate() {
        mean[i] = sample_mean[p];
    }
    Ok(CycleResult {
        cycle: inputs.cycle,
        analysis_mean: GridState {
            spec: spec.clone(),
            values: mean,
            time_index: inputs.cycle,
        },
        ensemble: EnsembleSet::from_values(&spec, members, inputs.cycle),
        diagnostics: draw
            .diagnostics
            .into_iter()
            .map(|chain| SamplerRecord { block: None, chain })
            .collect(),
        timings,
        observed_blocks: 1,
        sampled_dim: coords.len(),
    })
}

/// LETKF cycle: noised forecast of every member followed by the per-cell
/// ensemble transform.
pub fn letkf_cycle<T: Real>(
    ens: &EnsembleSet<T>,
    batch: Option<&ObservationBatch<T>>,
    inputs: &CycleInputs<'_, T>,
) -> Result<CycleResult<T>> {
    let t0 = Instant::now();
    let mut timings = CycleTimings::default();
    let (_, noised) = forecast(ens, inputs)?;
    let Some(batch) = batch.filter(|b| !b.is_empty()) else {
        return Ok(pure_forecast(ens, noised, inputs.cycle, timings, t0));
    };
    timings.forecast_ms = ms(t0);
    let t1 = Instant::now();
    let spec = ens.spec().clone();
    let cfg = inputs.cfg;
    let members = super::letkf::letkf_analysis(&spec, &noised, batch, cfg.letkf_loc_scale, cfg.inflation, inputs.cycle)?;
    timings.sample_ms = ms(t1);
    let mean = mean_of(&members);
    Ok(CycleResult {
        cycle: inputs.cycle,
        analysis_mean: GridState {
            spec: spec.clone(),
            values: mean,
            time_index: inputs.cycle,
        },
        ensemble: EnsembleSet::from_values(&spec, members, inputs.cycle),
        diagnostics: Vec::new(),
        timings,
        observed_blocks: 0,
        sampled_dim: spec.dim(),
    })
}
