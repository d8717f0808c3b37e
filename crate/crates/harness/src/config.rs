//! TOML experiment definitions.
//!
//! One file describes the grid, the forward model, process noise, the
//! observation network, how the truth is obtained and one or more filters to
//! run against it. See `configs/` for the shipped experiments and the README
//! for the full schema.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lsmcmc::filters::{FilterConfig, Inflation, Method, PartitionSchedule, ReduceStrategy};
use lsmcmc::localization::build_partition;
use lsmcmc::model::{DiagonalCovariance, ForwardModel, GridSpec, NoiseKind, OperatorKind, SweParams};
use lsmcmc::samplers::{KernelConfig, KernelKind};
use serde::{Deserialize, Serialize};

use crate::swath::SwathPattern;
use crate::{HarnessError, Result};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Number of assimilation cycles `T`.
    pub cycles: usize,
    /// Where outputs go; `results/<name>` by default. Relative paths are
    /// taken from the working directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Cycles at which `fields_{k}.csv` is written; first, middle and last by default.
    #[serde(default)]
    pub snapshots: Option<Vec<usize>>,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub process_noise: ProcessNoiseConfig,
    pub observations: ObservationConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub filters: Vec<FilterSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_vars")]
    pub vars: Vec<String>,
    #[serde(default = "yes")]
    pub periodic: bool,
}

fn default_vars() -> Vec<String> {
    vec!["z".into()]
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearAr {
        a: f64,
    },
    ShallowWater {
        substeps: usize,
        dt: f64,
        #[serde(default = "swe_gravity")]
        gravity: f64,
        #[serde(default = "swe_coriolis")]
        coriolis: f64,
        #[serde(default = "swe_dx")]
        dx: f64,
        #[serde(default = "swe_dx")]
        dy: f64,
        #[serde(default = "swe_drag")]
        drag: f64,
        #[serde(default = "swe_viscosity")]
        viscosity: f64,
    },
}

fn swe_gravity() -> f64 {
    9.81
}
fn swe_coriolis() -> f64 {
    1e-4
}
fn swe_dx() -> f64 {
    20_000.0
}
fn swe_drag() -> f64 {
    1e-4
}
fn swe_viscosity() -> f64 {
    4e4
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoiseConfig {
    /// Standard deviation per variable.
    pub std: Vec<f64>,
    /// Variables that receive noise; all by default.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Swath,
    Random,
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorChoice {
    LinearSelect,
    ArctanSelect,
}

impl From<OperatorChoice> for OperatorKind {
    fn from(o: OperatorChoice) -> Self {
        match o {
            OperatorChoice::LinearSelect => OperatorKind::LinearSelect,
            OperatorChoice::ArctanSelect => OperatorKind::ArctanSelect,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    Gaussian,
    Cauchy,
}

impl From<NoiseChoice> for NoiseKind {
    fn from(n: NoiseChoice) -> Self {
        match n {
            NoiseChoice::Gaussian => NoiseKind::Gaussian,
            NoiseChoice::Cauchy => NoiseKind::Cauchy,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub pattern: PatternKind,
    /// Swath: band width in diagonals.
    #[serde(default)]
    pub width: Option<usize>,
    /// Swath: cycles per full sweep.
    #[serde(default)]
    pub period: Option<usize>,
    /// Swath: number of equally spaced bands.
    #[serde(default)]
    pub bands: Option<usize>,
    /// Random: probability that a cell is observed in a cycle.
    #[serde(default)]
    pub fraction: Option<f64>,
    /// Fixed: CSV with columns `cycle,var,ix,iy,value,sigma`.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Observed variables; all by default.
    #[serde(default)]
    pub variables: Option<Vec<String>>,
    pub operator: OperatorChoice,
    pub noise: NoiseChoice,
    /// Noise scale; ignored for fixed files, which carry their own.
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    #[default]
    Twin,
    External,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialField {
    #[default]
    Zero,
    /// Smooth two-mode pattern of the given amplitude on every variable.
    Sinusoid,
    /// Geostrophically balanced eddies on top of `mean_depth` (shallow water only).
    Eddies,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default)]
    pub mode: TruthMode,
    #[serde(default)]
    pub initial: InitialField,
    #[serde(default = "one_f")]
    pub amplitude: f64,
    /// Added to the first variable (the depth for shallow water).
    #[serde(default)]
    pub mean_depth: f64,
    /// External truth: CSV with columns `cycle,var,ix,iy,value`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            mode: TruthMode::Twin,
            initial: InitialField::Zero,
            amplitude: 1.0,
            mean_depth: 0.0,
            file: None,
        }
    }
}

/// Filter initial condition relative to the initial truth field.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Per-variable std of one perturbation shared by all members (the
    /// filter's initial mean error).
    #[serde(default)]
    pub offset_std: Option<Vec<f64>>,
    /// Per-variable std of the initial ensemble spread.
    #[serde(default)]
    pub spread: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Any of `vs_kf`, `vs_truth`, `vs_obs`; all available ones by default.
    #[serde(default)]
    pub references: Option<Vec<String>>,
    /// Emit a row per variable as well as the `all` row.
    #[serde(default = "yes")]
    pub per_variable: bool,
    /// Named variable groups, e.g. `velocity = ["u", "v"]`.
    #[serde(default)]
    pub groups: std::collections::BTreeMap<String, Vec<String>>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            references: None,
            per_variable: true,
            groups: Default::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Record chain traces at the most-observed cell of this variable.
    #[serde(default)]
    pub trace_variable: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InflationKind {
    None,
    Rtps,
    Rtpp,
    Multiplicative,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InflationSection {
    pub kind: InflationKind,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Static(usize),
    PerCycle(Vec<usize>),
}

impl Default for GammaSetting {
    fn default() -> Self {
        GammaSetting::Static(1)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKind,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub chains: usize,
    pub init_step: f64,
    #[serde(default)]
    pub leapfrog_steps: Option<usize>,
    #[serde(default)]
    pub target_accept: Option<f64>,
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default)]
    pub componentwise: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// Name used in the `method` column; the method name by default.
    #[serde(default)]
    pub label: Option<String>,
    pub method: Method,
    #[serde(default = "one")]
    pub n_forecast: usize,
    #[serde(default)]
    pub n_analysis: Option<usize>,
    #[serde(default)]
    pub gamma: GammaSetting,
    #[serde(default = "one_f")]
    pub r_h: f64,
    #[serde(default = "one")]
    pub m_runs: usize,
    #[serde(default = "yes")]
    pub direct: bool,
    #[serde(default = "group_mean")]
    pub reduce: ReduceStrategy,
    #[serde(default)]
    pub inflation: Option<InflationSection>,
    #[serde(default = "one_f")]
    pub loc_scale: f64,
    #[serde(default)]
    pub kernel: Option<KernelSection>,
    /// Record a failing cycle as divergence (RMSE = inf from then on)
    /// instead of aborting the experiment.
    #[serde(default)]
    pub allow_divergence: bool,
    /// `false` runs the ensemble as a free forecast that ignores every
    /// observation; the no-assimilation baseline.
    #[serde(default = "yes")]
    pub assimilate: bool,
}

fn group_mean() -> ReduceStrategy {
    ReduceStrategy::GroupMean
}

impl FilterSection {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    pub fn to_filter_config(&self) -> FilterConfig<f64> {
        let mut cfg = FilterConfig::new(self.method, self.n_forecast, self.n_analysis.unwrap_or(self.n_forecast));
        cfg.partition = match &self.gamma {
            GammaSetting::Static(g) => PartitionSchedule::Static(*g),
            GammaSetting::PerCycle(v) => PartitionSchedule::PerCycle(v.clone()),
        };
        cfg.r_h = self.r_h;
        cfg.m_runs = self.m_runs;
        cfg.direct_when_possible = self.direct;
        cfg.reduce = self.reduce;
        cfg.letkf_loc_scale = self.loc_scale;
        cfg.inflation = match &self.inflation {
            None => Inflation::None,
            Some(s) => match s.kind {
                InflationKind::None => Inflation::None,
                InflationKind::Rtps => Inflation::Rtps(s.alpha),
                InflationKind::Rtpp => Inflation::Rtpp(s.alpha),
                InflationKind::Multiplicative => Inflation::Multiplicative(s.alpha),
            },
        };
        cfg.kernel = self.kernel.as_ref().map(|k| {
            let mut kc = KernelConfig::new(k.kind, cfg.n_analysis, k.burn_in, k.chains, k.init_step);
            if let Some(l) = k.leapfrog_steps {
                kc.leapfrog_steps = l;
            }
            if let Some(a) = k.target_accept {
                kc.target_accept = a;
            }
            kc.adapt = k.adapt;
            kc.componentwise = k.componentwise;
            kc
        });
        cfg
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text, path)?;
        Ok((cfg, text))
    }

    pub fn grid_spec(&self) -> Result<Arc<GridSpec>> {
        GridSpec::new(self.grid.nx, self.grid.ny, self.grid.vars.clone(), self.grid.periodic)
            .map(Arc::new)
            .map_err(|e| HarnessError::field("grid", e.to_string()))
    }

    pub fn forward_model(&self) -> ForwardModel<f64> {
        match &self.model {
            ModelConfig::LinearAr { a } => ForwardModel::linear_ar(*a),
            ModelConfig::ShallowWater {
                substeps,
                dt,
                gravity,
                coriolis,
                dx,
                dy,
                drag,
                viscosity,
            } => ForwardModel::shallow_water(
                SweParams {
                    gravity: *gravity,
                    coriolis: *coriolis,
                    dx: *dx,
                    dy: *dy,
                    drag: *drag,
                    viscosity: *viscosity,
                },
                *substeps,
                *dt,
            ),
        }
    }

    pub fn process_noise(&self, spec: &GridSpec) -> Result<DiagonalCovariance<f64>> {
        let pn = &self.process_noise;
        let r = match &pn.mask {
            Some(mask) => DiagonalCovariance::masked(spec, &pn.std, mask),
            None => DiagonalCovariance::per_variable(spec, &pn.std),
        };
        r.map_err(|e| HarnessError::field("process_noise.std", e.to_string()))
    }

    pub fn swath(&self) -> Option<SwathPattern> {
        let o = &self.observations;
        (o.pattern == PatternKind::Swath).then(|| SwathPattern {
            width: o.width.unwrap_or(14),
            period: o.period.unwrap_or(20),
            bands: o.bands.unwrap_or(2),
        })
    }

    /// Indices of the observed variables.
    pub fn observed_vars(&self) -> Result<Vec<usize>> {
        match &self.observations.variables {
            None => Ok((0..self.grid.vars.len()).collect()),
            Some(names) => names.iter().map(|n| self.var_index(n, "observations.variables")).collect(),
        }
    }

    pub fn var_index(&self, name: &str, field: &str) -> Result<usize> {
        self.grid
            .vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| HarnessError::field(field, format!("unknown variable {name:?}; grid has {:?}", self.grid.vars)))
    }

    pub fn snapshot_cycles(&self) -> Vec<usize> {
        let mut s = self
            .snapshots
            .clone()
            .unwrap_or_else(|| vec![1, self.cycles.div_ceil(2), self.cycles]);
        s.retain(|&k| k >= 1 && k <= self.cycles);
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Resolves a path relative to the config file's directory.
    pub fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
        match base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Field-level validation of everything that can be checked without running.
    pub fn validate(&self, base: Option<&Path>) -> Result<()> {
        fn f(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
            HarnessError::field(field, message)
        }
        if self.name.trim().is_empty() {
            return Err(f("name", "must not be empty"));
        }
        if self.cycles == 0 {
            return Err(f("cycles", "must be at least 1"));
        }
        let spec = self.grid_spec()?;
        let n_vars = spec.n_vars;
        self.forward_model()
            .validate(&spec)
            .map_err(|e| f("model", e.to_string()))?;
        if self.process_noise.std.len() != n_vars {
            return Err(f("process_noise.std", format!("expected {n_vars} entries, got {}", self.process_noise.std.len())));
        }
        let q = self.process_noise(&spec)?;
        let obs = &self.observations;
        match obs.pattern {
            PatternKind::Swath => {
                let p = self.swath().unwrap();
                if p.width == 0 {
                    return Err(f("observations.width", "must be at least 1"));
                }
                if p.period == 0 {
                    return Err(f("observations.period", "must be at least 1"));
                }
                if p.bands == 0 {
                    return Err(f("observations.bands", "must be at least 1"));
                }
            }
            PatternKind::Random => match obs.fraction {
                Some(x) if (0.0..=1.0).contains(&x) => {}
                Some(x) => return Err(f("observations.fraction", format!("must lie in [0, 1], got {x}"))),
                None => return Err(f("observations.fraction", "required for pattern = \"random\"")),
            },
            PatternKind::Fixed => match &obs.file {
                None => return Err(f("observations.file", "required for pattern = \"fixed\"")),
                Some(p) => {
                    let p = Self::resolve(base, p);
                    if !p.is_file() {
                        return Err(f("observations.file", format!("{} does not exist", p.display())));
                    }
                }
            },
        }
        if obs.pattern != PatternKind::Fixed && !(obs.sigma >= 0.0 && obs.sigma.is_finite()) {
            return Err(f("observations.sigma", "must be finite and non-negative"));
        }
        let observed = self.observed_vars()?;
        for &v in &observed {
            let idx = spec.index_of_cell(v, 0);
            if !q.is_active(idx) {
                return Err(f(
                    "observations.variables",
                    format!("variable {:?} has no process noise and cannot be assimilated", self.grid.vars[v]),
                ));
            }
        }
        match self.truth.mode {
            TruthMode::Twin => {}
            TruthMode::External => match &self.truth.file {
                None => return Err(f("truth.file", "required for mode = \"external\"")),
                Some(p) => {
                    let p = Self::resolve(base, p);
                    if !p.is_file() {
                        return Err(f("truth.file", format!("{} does not exist", p.display())));
                    }
                }
            },
        }
        if self.truth.mode == TruthMode::External && obs.pattern != PatternKind::Fixed {
            return Err(f("observations.pattern", "external truth needs a fixed observation file"));
        }
        if self.truth.initial == InitialField::Eddies && !matches!(self.model, ModelConfig::ShallowWater { .. }) {
            return Err(f("truth.initial", "eddies need the shallow_water model"));
        }
        for (name, v) in [("initial.offset_std", &self.initial.offset_std), ("initial.spread", &self.initial.spread)] {
            if let Some(v) = v {
                if v.len() != n_vars || v.iter().any(|x| !(*x >= 0.0)) {
                    return Err(f(name, format!("expected {n_vars} non-negative entries")));
                }
            }
        }
        if let Some(refs) = &self.metrics.references {
            for r in refs {
                if !["vs_kf", "vs_truth", "vs_obs"].contains(&r.as_str()) {
                    return Err(f("metrics.references", format!("unknown reference {r:?}")));
                }
            }
        }
        for (g, names) in &self.metrics.groups {
            if names.is_empty() {
                return Err(f(format!("metrics.groups.{g}"), "must list at least one variable"));
            }
            for n in names {
                self.var_index(n, &format!("metrics.groups.{g}"))?;
            }
        }
        if let Some(v) = &self.diagnostics.trace_variable {
            self.var_index(v, "diagnostics.trace_variable")?;
        }
        if self.filters.is_empty() {
            return Err(f("filters", "at least one [[filters]] section is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        let nonlinear = obs.operator != OperatorChoice::LinearSelect || obs.noise != NoiseChoice::Gaussian;
        for (i, fs) in self.filters.iter().enumerate() {
            let field = |name: &str| format!("filters[{i}].{name}");
            if !labels.insert(fs.label()) {
                return Err(f(field("label"), format!("duplicate label {:?}", fs.label())));
            }
            let cfg = fs.to_filter_config();
            cfg.validate().map_err(|e| f(field("method"), e.to_string()))?;
            if let Some(k) = &cfg.kernel {
                let mut k = k.clone();
                k.n_analysis = cfg.n_analysis;
                k.validate().map_err(|e| f(field("kernel"), e.to_string()))?;
            }
            match fs.method {
                Method::Kf => {
                    if !matches!(self.model, ModelConfig::LinearAr { .. }) || nonlinear {
                        return Err(f(field("method"), "the Kalman filter needs linear_ar with linear Gaussian observations"));
                    }
                    if fs.m_runs != 1 {
                        return Err(f(field("m_runs"), "the Kalman filter is exact; use m_runs = 1"));
                    }
                }
                Method::LsmcmcV1 | Method::LsmcmcV2 => {
                    if fs.assimilate && (nonlinear || !fs.direct) && fs.kernel.is_none() {
                        return Err(f(
                            field("kernel"),
                            "observations are not linear-Gaussian (or direct = false), so an MCMC kernel is required",
                        ));
                    }
                    for g in cfg.partition.all() {
                        build_partition::<f64>(spec.clone(), g).map_err(|e| f(field("gamma"), e.to_string()))?;
                    }
                }
                Method::Smcmc | Method::Letkf => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
seed = 1
cycles = 2
[grid]
nx = 4
ny = 4
vars = ["h", "u"]
periodic = true
[model]
kind = "linear_ar"
a = 0.5
[process_noise]
std = [0.1, 0.1]
[observations]
pattern = "random"
fraction = 0.5
operator = "linear_select"
noise = "gaussian"
sigma = 0.1
[[filters]]
method = "kf"
[[filters]]
method = "lsmcmc_v2"
n_forecast = 4
n_analysis = 8
gamma = 4
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("t.toml"))
    }

    fn field_of(text: &str) -> String {
        match parse(text).unwrap().validate(None) {
            Err(HarnessError::Field { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn base_config_is_valid() {
        parse(BASE).unwrap().validate(None).unwrap();
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let err = parse(&BASE.replace("seed = 1", "seed = 1\ncolour = 2")).unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }), "{err:?}");
        assert!(err.to_string().contains("colour"));
        assert!(matches!(parse(&BASE.replace("\"kf\"", "\"kalman\"")), Err(HarnessError::Parse { .. })));
    }

    #[test]
    fn bad_values_name_their_field() {
        assert_eq!(field_of(&BASE.replace("cycles = 2", "cycles = 0")), "cycles");
        assert_eq!(field_of(&BASE.replace("fraction = 0.5", "fraction = 1.5")), "observations.fraction");
        assert_eq!(field_of(&BASE.replace("std = [0.1, 0.1]", "std = [0.1]")), "process_noise.std");
        assert_eq!(field_of(&BASE.replace("gamma = 4", "gamma = 5")), "filters[1].gamma");
        assert_eq!(field_of(&BASE.replace("sigma = 0.1", "sigma = -1.0")), "observations.sigma");
    }

    #[test]
    fn method_requirements() {
        let cauchy = BASE.replace("noise = \"gaussian\"", "noise = \"cauchy\"");
        assert_eq!(field_of(&cauchy), "filters[0].method");
        let no_kf = cauchy.replace("[[filters]]\nmethod = \"kf\"\n", "");
        assert_eq!(field_of(&no_kf), "filters[0].kernel");
        let dup = format!("{BASE}[[filters]]\nmethod = \"kf\"\n");
        assert_eq!(field_of(&dup), "filters[2].label");
    }

    #[test]
    fn unobserved_noise_free_variables_are_allowed() {
        let text = BASE
            .replace("std = [0.1, 0.1]", "std = [0.1, 0.1]\nmask = [true, false]")
            .replace("sigma = 0.1", "sigma = 0.1\nvariables = [\"h\"]");
        parse(&text).unwrap().validate(None).unwrap();
        let text = BASE.replace("std = [0.1, 0.1]", "std = [0.1, 0.1]\nmask = [true, false]");
        assert_eq!(field_of(&text), "observations.variables");
        let text = BASE.replace("std = [0.1, 0.1]", "std = [0.1, 0.0]");
        assert_eq!(field_of(&text), "process_noise.std");
    }
}
