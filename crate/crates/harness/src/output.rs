//! Files written into an experiment's output directory.
//!
//! | file | contents |
//! |---|---|
//! | `metrics.csv` | `cycle,method,variable,reference,rmse,wall_ms` |
//! | `timings.csv` | per-cycle, per-run phase timings |
//! | `diagnostics.jsonl` | one JSON object per MCMC chain per cycle |
//! | `fields_{k}.csv` | `method,variable,ix,iy,value` snapshots, truth included |
//! | `manifest.json` | seed, config hash and text, versions, status |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lsmcmc::filters::{CycleTimings, SamplerRecord};
use lsmcmc::GridState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::{format_number, MetricRow};
use crate::{io_err, Result};

pub const METRICS_HEADER: [&str; 6] = ["cycle", "method", "variable", "reference", "rmse", "wall_ms"];
pub const TIMINGS_HEADER: [&str; 9] = [
    "cycle",
    "method",
    "run",
    "observed_blocks",
    "sampled_dim",
    "forecast_ms",
    "build_ms",
    "sample_ms",
    "reduce_ms",
];

pub struct OutputWriter {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    timings: csv::Writer<File>,
    diagnostics: BufWriter<File>,
}

#[derive(Serialize)]
struct DiagnosticLine<'a> {
    cycle: usize,
    method: &'a str,
    run: usize,
    #[serde(flatten)]
    record: &'a SamplerRecord,
}

impl OutputWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let open = |name: &str| {
            let p = dir.join(name);
            File::create(&p).map_err(io_err(p))
        };
        let mut metrics = csv::Writer::from_writer(open("metrics.csv")?);
        metrics.write_record(METRICS_HEADER)?;
        metrics.flush().map_err(io_err(dir.join("metrics.csv")))?;
        let mut timings = csv::Writer::from_writer(open("timings.csv")?);
        timings.write_record(TIMINGS_HEADER)?;
        let diagnostics = BufWriter::new(open("diagnostics.jsonl")?);
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            timings,
            diagnostics,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends rows and flushes, so a later failure leaves them on disk.
    /// `wall_ms` is left empty: timings live in `timings.csv` so that
    /// metrics stay byte-identical across reruns.
    pub fn write_metrics(&mut self, rows: &[MetricRow]) -> Result<()> {
        for r in rows {
            self.metrics.write_record([
                r.cycle.to_string().as_str(),
                &r.method,
                &r.variable,
                r.reference.as_str(),
                &format_number(r.rmse),
                "",
            ])?;
        }
        self.metrics.flush().map_err(io_err(self.dir.join("metrics.csv")))
    }

    pub fn write_cycle(
        &mut self,
        method: &str,
        run: usize,
        cycle: usize,
        observed_blocks: usize,
        sampled_dim: usize,
        t: &CycleTimings,
        records: &[SamplerRecord],
    ) -> Result<()> {
        self.timings.write_record([
            cycle.to_string(),
            method.to_string(),
            run.to_string(),
            observed_blocks.to_string(),
            sampled_dim.to_string(),
            format!("{:.3}", t.forecast_ms),
            format!("{:.3}", t.build_ms),
            format!("{:.3}", t.sample_ms),
            format!("{:.3}", t.reduce_ms),
        ])?;
        for record in records {
            let line = DiagnosticLine {
                cycle,
                method,
                run,
                record,
            };
            serde_json::to_writer(&mut self.diagnostics, &line)?;
            self.diagnostics
                .write_all(b"\n")
                .map_err(io_err(self.dir.join("diagnostics.jsonl")))?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush().map_err(io_err(self.dir.join("metrics.csv")))?;
        self.timings.flush().map_err(io_err(self.dir.join("timings.csv")))?;
        self.diagnostics.flush().map_err(io_err(self.dir.join("diagnostics.jsonl")))
    }
}

/// `fields_{k}.csv`: every variable of every listed state at cycle `k`.
pub fn write_fields(dir: &Path, cycle: usize, states: &[(&str, &GridState)]) -> Result<PathBuf> {
    let path = dir.join(format!("fields_{cycle}.csv"));
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
    w.write_record(["method", "variable", "ix", "iy", "value"])?;
    for (label, state) in states {
        let spec = &state.spec;
        for v in 0..spec.n_vars {
            let name = &spec.var_names[v];
            for iy in 0..spec.ny {
                for ix in 0..spec.nx {
                    let x = state.values[spec.index(v, ix, iy)];
                    w.write_record([*label, name.as_str(), &ix.to_string(), &iy.to_string(), &format_number(x)])?;
                }
            }
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub lsmcmc: String,
    pub harness: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            lsmcmc: lsmcmc_version().into(),
            harness: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

fn lsmcmc_version() -> &'static str {
    // both crates share the workspace version
    env!("CARGO_PKG_VERSION")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Everything needed to rerun an experiment exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub cycles: usize,
    pub config_sha256: String,
    /// The config file exactly as read; `seed` and `cycles` above override it.
    pub config: String,
    /// Directory relative input files were resolved against.
    pub config_dir: Option<PathBuf>,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| crate::HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
