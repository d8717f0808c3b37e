//! Running a configured experiment end to end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lsmcmc::filters::{Filter, Method};
use lsmcmc::{GridSpec, GridState, ObservationBatch, Stream, StreamKey};

use crate::config::{ExperimentConfig, FilterSection};
use crate::metrics::{rmse_at, rmse_vs_obs, MetricRow, Reference};
use crate::output::{sha256_hex, write_fields, Manifest, OutputWriter, RunStatus, Versions};
use crate::twin::{generate_twin, TwinData};
use crate::Result;

/// Overrides and context for one run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub cycles: Option<usize>,
    /// Output directory; beats the config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Directory that relative paths inside the config are resolved against.
    pub base_dir: Option<PathBuf>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

/// The outcome of one `[[filters]]` section.
#[derive(Clone, Debug)]
pub struct FilterRun {
    pub label: String,
    pub method: Method,
    /// Replicate-averaged analysis mean per cycle; empty from the failing
    /// cycle on when the filter diverged.
    pub means: Vec<GridState>,
    /// First cycle that failed, when `allow_divergence` let the run continue.
    pub diverged_at: Option<usize>,
    pub metrics: Vec<MetricRow>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub output_dir: PathBuf,
    pub twin: TwinData,
    pub runs: Vec<FilterRun>,
}

impl ExperimentResult {
    pub fn run(&self, label: &str) -> Option<&FilterRun> {
        self.runs.iter().find(|r| r.label == label)
    }
}

impl FilterRun {
    /// RMSE series for one variable selection and reference, by cycle.
    pub fn series(&self, variable: &str, reference: Reference) -> Vec<f64> {
        self.metrics
            .iter()
            .filter(|r| r.variable == variable && r.reference == reference)
            .map(|r| r.rmse)
            .collect()
    }
}

/// A named set of state indices that metrics are computed over.
struct Selection {
    name: String,
    vars: Vec<usize>,
    indices: Vec<usize>,
}

fn selections(cfg: &ExperimentConfig, spec: &GridSpec) -> Result<Vec<Selection>> {
    let n = spec.n_cells();
    let make = |name: String, vars: Vec<usize>| {
        let indices = vars.iter().flat_map(|&v| v * n..(v + 1) * n).collect();
        Selection { name, vars, indices }
    };
    let mut out = vec![make("all".into(), (0..spec.n_vars).collect())];
    if cfg.metrics.per_variable && spec.n_vars > 1 {
        for v in 0..spec.n_vars {
            out.push(make(spec.var_names[v].clone(), vec![v]));
        }
    }
    for (g, names) in &cfg.metrics.groups {
        let vars = names
            .iter()
            .map(|n| cfg.var_index(n, &format!("metrics.groups.{g}")))
            .collect::<Result<Vec<_>>>()?;
        out.push(make(g.clone(), vars));
    }
    Ok(out)
}

fn references(cfg: &ExperimentConfig, has_kf: bool) -> Vec<Reference> {
    let mut refs: Vec<Reference> = match &cfg.metrics.references {
        Some(list) => list.iter().filter_map(|s| Reference::parse(s)).collect(),
        None => {
            let mut r = vec![Reference::VsTruth];
            if has_kf {
                r.insert(0, Reference::VsKf);
            }
            r
        }
    };
    refs.retain(|r| has_kf || *r != Reference::VsKf);
    refs.dedup();
    refs
}

/// The most frequently observed cell of `var` over all cycles, ties broken
/// by the lowest index. Returns its global state index.
pub fn most_observed_index(spec: &GridSpec, batches: &[Option<ObservationBatch>], var: usize) -> Option<usize> {
    let n = spec.n_cells();
    let mut counts = vec![0usize; n];
    for b in batches.iter().flatten() {
        for &i in &b.operator.indices {
            let (v, c) = spec.var_cell(i);
            if v == var {
                counts[c] += 1;
            }
        }
    }
    let best = *counts.iter().max()?;
    (best > 0).then(|| spec.index_of_cell(var, counts.iter().position(|&c| c == best).unwrap()))
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    twin: &'a TwinData,
    sels: &'a [Selection],
    refs: &'a [Reference],
    trace_index: Option<usize>,
    verbose: bool,
}

fn run_one(
    ctx: &Context<'_>,
    section: &FilterSection,
    kf_means: Option<&[GridState]>,
    out: &mut OutputWriter,
) -> Result<FilterRun> {
    let cfg = ctx.cfg;
    let twin = ctx.twin;
    let label = section.label();
    let mut fcfg = section.to_filter_config();
    fcfg.trace_index = ctx.trace_index;
    let model = cfg.forward_model();
    let q = cfg.process_noise(&twin.spec)?;
    let dim = twin.spec.dim();
    let cycles = twin.batches.len();
    let start = Instant::now();
    let mut sums = vec![vec![0.0; dim]; cycles];
    let mut completed = cycles;
    let mut diverged_at = None;
    for r in 0..fcfg.m_runs {
        let key = StreamKey::new(cfg.seed, Stream::Sampler).replicate(r as u64);
        let mut filter = Filter::new(fcfg.clone(), twin.spec.clone(), model.clone(), q.clone(), &twin.initial, key)?;
        for (k0, batch) in twin.batches.iter().enumerate() {
            if k0 >= completed {
                break;
            }
            let batch = if section.assimilate { batch.as_ref() } else { None };
            match filter.cycle(batch) {
                Ok(res) => {
                    out.write_cycle(&label, r, res.cycle, res.observed_blocks, res.sampled_dim, &res.timings, &res.diagnostics)?;
                    for (s, x) in sums[k0].iter_mut().zip(&res.analysis_mean.values) {
                        *s += x;
                    }
                }
                Err(e) if section.allow_divergence => {
                    if ctx.verbose {
                        eprintln!("{label}: run {r} diverged: {e}");
                    }
                    completed = k0;
                    diverged_at = Some(diverged_at.map_or(k0 + 1, |d: usize| d.min(k0 + 1)));
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let inv = 1.0 / fcfg.m_runs as f64;
    let means: Vec<GridState> = sums
        .into_iter()
        .take(completed)
        .enumerate()
        .map(|(k0, mut v)| {
            v.iter_mut().for_each(|x| *x *= inv);
            GridState {
                spec: twin.spec.clone(),
                values: v,
                time_index: k0 + 1,
            }
        })
        .collect();
    let mut rows = Vec::new();
    for k in 1..=cycles {
        for sel in ctx.sels {
            for &reference in ctx.refs {
                let rmse = match means.get(k - 1) {
                    None => f64::INFINITY,
                    Some(m) => match reference {
                        Reference::VsTruth => rmse_at(&m.values, &twin.truth[k].values, &sel.indices)?,
                        Reference::VsKf => match kf_means {
                            Some(kf) => rmse_at(&m.values, &kf[k - 1].values, &sel.indices)?,
                            // the reference filter itself
                            None if section.method == Method::Kf => 0.0,
                            None => continue,
                        },
                        Reference::VsObs => match &twin.batches[k - 1] {
                            Some(b) => {
                                let n = twin.spec.n_cells();
                                rmse_vs_obs(&m.values, b, |i| sel.vars.contains(&(i / n))).unwrap_or(f64::NAN)
                            }
                            None => f64::NAN,
                        },
                    },
                };
                rows.push(MetricRow {
                    cycle: k,
                    method: label.clone(),
                    variable: sel.name.clone(),
                    reference,
                    rmse,
                });
            }
        }
    }
    out.write_metrics(&rows)?;
    out.flush()?;
    let seconds = start.elapsed().as_secs_f64();
    if ctx.verbose {
        eprintln!("{label}: {cycles} cycles x {} run(s) in {seconds:.1} s", fcfg.m_runs);
    }
    Ok(FilterRun {
        label,
        method: section.method,
        means,
        diverged_at,
        metrics: rows,
        seconds,
    })
}

/// Applies the overrides in `opts` and returns the effective config.
pub fn apply_overrides(mut cfg: ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(c) = opts.cycles {
        cfg.cycles = c;
    }
    cfg
}

pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("results").join(&cfg.name))
}

/// Validates, generates the twin, runs every filter and writes all outputs.
///
/// Configuration errors are returned before anything touches the disk.
/// Runtime errors leave the rows written so far and a manifest with
/// `status = "failed"`.
pub fn run_experiment(cfg: ExperimentConfig, config_text: &str, opts: &RunOptions) -> Result<ExperimentResult> {
    let cfg = apply_overrides(cfg, opts);
    let base = opts.base_dir.as_deref();
    cfg.validate(base)?;
    let dir = output_dir(&cfg, opts);
    let mut manifest = Manifest {
        name: cfg.name.clone(),
        seed: cfg.seed,
        cycles: cfg.cycles,
        config_sha256: sha256_hex(config_text),
        config: config_text.to_string(),
        config_dir: base.map(|b| std::fs::canonicalize(b).unwrap_or_else(|_| b.to_path_buf())),
        versions: Versions::default(),
        outputs: vec![
            "metrics.csv".into(),
            "timings.csv".into(),
            "diagnostics.jsonl".into(),
        ],
        status: RunStatus::Running,
        error: None,
    };
    let mut out = OutputWriter::create(&dir)?;
    manifest.write(&dir)?;
    let mut runs = Vec::new();
    let result = execute(&cfg, base, opts, &mut out, &mut runs, &mut manifest);
    out.flush()?;
    match result {
        Ok(twin) => {
            manifest.status = RunStatus::Completed;
            manifest.write(&dir)?;
            Ok(ExperimentResult {
                output_dir: dir,
                twin,
                runs,
            })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(&dir)?;
            Err(e)
        }
    }
}

fn execute(
    cfg: &ExperimentConfig,
    base: Option<&Path>,
    opts: &RunOptions,
    out: &mut OutputWriter,
    runs: &mut Vec<FilterRun>,
    manifest: &mut Manifest,
) -> Result<TwinData> {
    let t0 = Instant::now();
    let twin = generate_twin(cfg, base)?;
    if opts.verbose {
        eprintln!("{}: truth and observations ready in {:.1} s", cfg.name, t0.elapsed().as_secs_f64());
    }
    let sels = selections(cfg, &twin.spec)?;
    let has_kf = cfg.filters.iter().any(|f| f.method == Method::Kf);
    let refs = references(cfg, has_kf);
    let trace_index = match &cfg.diagnostics.trace_variable {
        Some(v) => most_observed_index(&twin.spec, &twin.batches, cfg.var_index(v, "diagnostics.trace_variable")?),
        None => None,
    };
    let ctx = Context {
        cfg,
        twin: &twin,
        sels: &sels,
        refs: &refs,
        trace_index,
        verbose: opts.verbose,
    };
    // the Kalman reference has to exist before anything is compared to it
    let mut order: Vec<&FilterSection> = cfg.filters.iter().filter(|f| f.method == Method::Kf).collect();
    order.extend(cfg.filters.iter().filter(|f| f.method != Method::Kf));
    let mut kf_means: Option<Vec<GridState>> = None;
    for section in order {
        let run = run_one(&ctx, section, kf_means.as_deref(), out)?;
        if section.method == Method::Kf && kf_means.is_none() {
            kf_means = Some(run.means.clone());
        }
        runs.push(run);
    }
    for k in cfg.snapshot_cycles() {
        let mut states: Vec<(&str, &GridState)> = vec![("truth", &twin.truth[k])];
        for r in runs.iter() {
            if let Some(m) = r.means.get(k - 1) {
                states.push((&r.label, m));
            }
        }
        write_fields(out.dir(), k, &states)?;
        manifest.outputs.push(format!("fields_{k}.csv"));
    }
    Ok(twin)
}

/// Loads a config or a `manifest.json` and runs it.
pub fn run_path(path: &Path, opts: &RunOptions) -> Result<ExperimentResult> {
    let mut opts = opts.clone();
    if path.extension().is_some_and(|e| e == "json") {
        let m = Manifest::read(path)?;
        let cfg = ExperimentConfig::from_toml(&m.config, path)?;
        opts.seed = opts.seed.or(Some(m.seed));
        opts.cycles = opts.cycles.or(Some(m.cycles));
        if opts.base_dir.is_none() {
            opts.base_dir = m.config_dir.clone();
        }
        return run_experiment(cfg, &m.config, &opts);
    }
    let (cfg, text) = ExperimentConfig::load(path)?;
    if opts.base_dir.is_none() {
        opts.base_dir = path.parent().map(Path::to_path_buf);
    }
    run_experiment(cfg, &text, &opts)
}

/// Parses and validates without running. Returns the effective config.
pub fn validate_path(path: &Path) -> Result<ExperimentConfig> {
    let (cfg, _) = ExperimentConfig::load(path)?;
    cfg.validate(path.parent())?;
    Ok(cfg)
}
