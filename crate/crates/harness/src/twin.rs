//! Nature runs and synthetic observations.
//!
//! Every random draw uses its own stream: the truth's process noise, the
//! observation noise, random observation masks and the filter's initial
//! offset never share a key with each other or with the filters, so changing
//! a filter setting can never change the truth or the observations.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use lsmcmc::filters::InitialCondition;
use lsmcmc::model::{add_process_noise_in_place, forward_propagate, ModelKind, ObservationOperator};
use lsmcmc::{DiagonalCovariance, GridSpec, GridState, NoiseModel, ObservationBatch, Stream, StreamKey};
use rand::Rng;
use serde::Deserialize;

use crate::config::{ExperimentConfig, InitialField, PatternKind, TruthMode};
use crate::swath::generate_swath;
use crate::{HarnessError, Result};

/// Truth trajectory, per-cycle observations and the filters' starting point.
#[derive(Clone, Debug)]
pub struct TwinData {
    pub spec: Arc<GridSpec>,
    /// `truth[k]` is the state at cycle `k`; `truth[0]` is the initial state.
    pub truth: Vec<GridState>,
    /// `batches[k − 1]` is assimilated at cycle `k`.
    pub batches: Vec<Option<ObservationBatch>>,
    pub initial: InitialCondition<f64>,
}

/// Draws the truth and observations for `cfg`. `base` is the directory that
/// relative file paths in the config are resolved against.
pub fn generate_twin(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<TwinData> {
    let spec = cfg.grid_spec()?;
    let truth = match cfg.truth.mode {
        TruthMode::Twin => nature_run(cfg, &spec)?,
        TruthMode::External => {
            let path = ExperimentConfig::resolve(base, cfg.truth.file.as_deref().unwrap());
            read_truth(cfg, &spec, &path)?
        }
    };
    let batches = match cfg.observations.pattern {
        PatternKind::Fixed => {
            let path = ExperimentConfig::resolve(base, cfg.observations.file.as_deref().unwrap());
            read_observations(cfg, &spec, &path)?
        }
        _ => synthesize(cfg, &spec, &truth)?,
    };
    let initial = initial_condition(cfg, &spec, &truth[0])?;
    Ok(TwinData {
        spec,
        truth,
        batches,
        initial,
    })
}

fn initial_field(cfg: &ExperimentConfig, spec: &Arc<GridSpec>) -> GridState {
    let mut state = GridState::filled(spec.clone(), 0.0);
    let amp = cfg.truth.amplitude;
    let two_pi = std::f64::consts::TAU;
    let (nx, ny) = (spec.nx as f64, spec.ny as f64);
    match cfg.truth.initial {
        InitialField::Zero => {}
        InitialField::Sinusoid => {
            for v in 0..spec.n_vars {
                let phase = v as f64;
                let slice = state.var_slice_mut(v);
                for iy in 0..spec.ny {
                    for ix in 0..spec.nx {
                        let x = two_pi * ix as f64 / nx;
                        let y = two_pi * iy as f64 / ny;
                        slice[iy * spec.nx + ix] = amp * ((x + phase).sin() * y.cos() + 0.5 * (2.0 * y - phase).sin());
                    }
                }
            }
        }
        InitialField::Eddies => {
            let model = cfg.forward_model();
            let ModelKind::ShallowWater(p) = model.kind else {
                unreachable!("validated");
            };
            let gf = p.gravity / p.coriolis;
            let (lx, ly) = (nx * p.dx, ny * p.dy);
            // (x wavenumber, y wavenumber, phase, weight)
            const MODES: [(f64, f64, f64, f64); 4] =
                [(1.0, 1.0, 0.0, 1.0), (2.0, 1.0, 1.3, 0.6), (1.0, -2.0, 2.1, 0.5), (3.0, 2.0, 0.7, 0.3)];
            let n = spec.n_cells();
            for iy in 0..spec.ny {
                for ix in 0..spec.nx {
                    let (x, y) = (ix as f64 * p.dx, iy as f64 * p.dy);
                    let (mut h, mut hx, mut hy) = (0.0, 0.0, 0.0);
                    for (m, l, phi, w) in MODES {
                        let (kx, ky) = (two_pi * m / lx, two_pi * l / ly);
                        let arg = kx * x + ky * y + phi;
                        h += w * arg.sin();
                        hx += w * kx * arg.cos();
                        hy += w * ky * arg.cos();
                    }
                    let c = iy * spec.nx + ix;
                    state.values[c] = amp * h;
                    state.values[n + c] = -gf * amp * hy;
                    state.values[2 * n + c] = gf * amp * hx;
                }
            }
        }
    }
    let depth = cfg.truth.mean_depth;
    state.var_slice_mut(0).iter_mut().for_each(|h| *h += depth);
    state
}

fn nature_run(cfg: &ExperimentConfig, spec: &Arc<GridSpec>) -> Result<Vec<GridState>> {
    let model = cfg.forward_model();
    let q = cfg.process_noise(spec)?;
    let mut truth = Vec::with_capacity(cfg.cycles + 1);
    truth.push(initial_field(cfg, spec));
    for k in 1..=cfg.cycles {
        let step = || -> lsmcmc::Result<GridState> {
            let mut next = forward_propagate(&truth[k - 1], &model)?;
            let mut rng = StreamKey::new(cfg.seed, Stream::Truth).cycle(k as u64).rng();
            add_process_noise_in_place(&mut next.values, &q, &mut rng)?;
            next.time_index = k;
            Ok(next)
        };
        let next = step().map_err(|e| lsmcmc::Error::AtCycle {
            cycle: k,
            source: Box::new(e),
        })?;
        truth.push(next);
    }
    Ok(truth)
}

fn observed_cells(cfg: &ExperimentConfig, spec: &GridSpec, k: usize) -> Vec<usize> {
    match cfg.observations.pattern {
        PatternKind::Swath => generate_swath(spec, &cfg.swath().unwrap(), k),
        PatternKind::Random => {
            let frac = cfg.observations.fraction.unwrap_or(0.0);
            let mut rng = StreamKey::new(cfg.seed, Stream::ObservationMask).cycle(k as u64).rng();
            (0..spec.n_cells()).filter(|_| rng.random::<f64>() < frac).collect()
        }
        PatternKind::Fixed => unreachable!(),
    }
}

fn synthesize(cfg: &ExperimentConfig, spec: &Arc<GridSpec>, truth: &[GridState]) -> Result<Vec<Option<ObservationBatch>>> {
    let vars = cfg.observed_vars()?;
    let obs = &cfg.observations;
    let kind = obs.operator.into();
    let noise_kind = obs.noise.into();
    let mut out = Vec::with_capacity(cfg.cycles);
    for k in 1..=cfg.cycles {
        let cells = observed_cells(cfg, spec, k);
        if cells.is_empty() {
            out.push(None);
            continue;
        }
        let indices: Vec<usize> = vars
            .iter()
            .flat_map(|&v| cells.iter().map(move |&c| spec.index_of_cell(v, c)))
            .collect();
        let op = ObservationOperator::new(kind, indices, spec.dim())?;
        let noise = NoiseModel::new(noise_kind, vec![obs.sigma; op.len()])?;
        let mut rng = StreamKey::new(cfg.seed, Stream::Observation).cycle(k as u64).rng();
        let values = op
            .indices
            .iter()
            .map(|&i| op.map(truth[k].values[i]) + noise.sample(obs.sigma, &mut rng))
            .collect();
        out.push(Some(ObservationBatch::new(k, op, values, noise)?));
    }
    Ok(out)
}

fn initial_condition(cfg: &ExperimentConfig, spec: &Arc<GridSpec>, truth0: &GridState) -> Result<InitialCondition<f64>> {
    let mut mean = truth0.clone();
    if let Some(offset) = &cfg.initial.offset_std {
        if let Some(q) = masked_per_variable(spec, offset, "initial.offset_std")? {
            let mut rng = StreamKey::new(cfg.seed, Stream::InitialPerturbation).id(u64::MAX).rng();
            add_process_noise_in_place(&mut mean.values, &q, &mut rng)?;
        }
    }
    let spread = match &cfg.initial.spread {
        Some(s) => masked_per_variable(spec, s, "initial.spread")?,
        None => None,
    };
    Ok(InitialCondition { mean, spread })
}

/// Per-variable standard deviations where zero means "no perturbation";
/// `None` when every entry is zero.
fn masked_per_variable(spec: &GridSpec, stds: &[f64], field: &str) -> Result<Option<DiagonalCovariance>> {
    let mask: Vec<bool> = stds.iter().map(|&s| s > 0.0).collect();
    if !mask.iter().any(|&m| m) {
        return Ok(None);
    }
    DiagonalCovariance::masked(spec, stds, &mask)
        .map(Some)
        .map_err(|e| HarnessError::field(field, e.to_string()))
}

/// A variable given by name or by zero-based index.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum VarRef {
    Index(usize),
    Name(String),
}

impl VarRef {
    fn resolve(&self, spec: &GridSpec) -> Option<usize> {
        match self {
            VarRef::Index(i) => (*i < spec.n_vars).then_some(*i),
            VarRef::Name(n) => spec.var_index(n),
        }
    }
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    cycle: usize,
    var: VarRef,
    ix: usize,
    iy: usize,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct ObsRow {
    cycle: usize,
    var: VarRef,
    ix: usize,
    iy: usize,
    value: f64,
    sigma: f64,
}

fn row_error(path: &Path, line: usize, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: format!("record {line}: {message}"),
    }
}

fn state_index(spec: &GridSpec, var: &VarRef, ix: usize, iy: usize) -> Option<usize> {
    let v = var.resolve(spec)?;
    (ix < spec.nx && iy < spec.ny).then(|| spec.index(v, ix, iy))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| row_error(path, 0, e))
}

/// Reads `cycle,var,ix,iy,value` rows; every cell of cycles `0..=T` must be present.
fn read_truth(cfg: &ExperimentConfig, spec: &Arc<GridSpec>, path: &Path) -> Result<Vec<GridState>> {
    let mut values = vec![vec![f64::NAN; spec.dim()]; cfg.cycles + 1];
    for (line, row) in open_csv(path)?.deserialize::<TruthRow>().enumerate() {
        let row = row.map_err(|e| row_error(path, line + 1, e))?;
        let i = state_index(spec, &row.var, row.ix, row.iy).ok_or_else(|| row_error(path, line + 1, "cell outside the grid"))?;
        if row.cycle <= cfg.cycles {
            values[row.cycle][i] = row.value;
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            GridState::new(spec.clone(), v, k).map_err(|_| HarnessError::Parse {
                path: path.to_path_buf(),
                message: format!("cycle {k} is missing cells or has non-finite values"),
            })
        })
        .collect()
}

/// Reads `cycle,var,ix,iy,value,sigma` rows into one batch per cycle.
fn read_observations(cfg: &ExperimentConfig, spec: &Arc<GridSpec>, path: &Path) -> Result<Vec<Option<ObservationBatch>>> {
    let mut per_cycle: HashMap<usize, (Vec<usize>, Vec<f64>, Vec<f64>)> = HashMap::new();
    for (line, row) in open_csv(path)?.deserialize::<ObsRow>().enumerate() {
        let row = row.map_err(|e| row_error(path, line + 1, e))?;
        if row.cycle == 0 {
            return Err(row_error(path, line + 1, "observations start at cycle 1"));
        }
        let i = state_index(spec, &row.var, row.ix, row.iy).ok_or_else(|| row_error(path, line + 1, "cell outside the grid"))?;
        let e = per_cycle.entry(row.cycle).or_default();
        e.0.push(i);
        e.1.push(row.value);
        e.2.push(row.sigma);
    }
    let kind = cfg.observations.operator.into();
    let noise_kind = cfg.observations.noise.into();
    (1..=cfg.cycles)
        .map(|k| match per_cycle.remove(&k) {
            None => Ok(None),
            Some((idx, vals, sig)) => {
                let wrap = |e: lsmcmc::Error| row_error(path, 0, format!("cycle {k}: {e}"));
                let op = ObservationOperator::new(kind, idx, spec.dim()).map_err(wrap)?;
                let noise = NoiseModel::new(noise_kind, sig).map_err(wrap)?;
                Ok(Some(ObservationBatch::new(k, op, vals, noise).map_err(wrap)?))
            }
        })
        .collect()
}
