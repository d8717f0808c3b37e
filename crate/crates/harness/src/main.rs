use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsmcmc_harness::experiment::output_dir;
use lsmcmc_harness::{run_path, validate_path, HarnessError, RunOptions};

/// Twin experiments for localized sequential MCMC filters.
#[derive(Parser)]
#[command(name = "lsmcmc", version)]
struct Cli {
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: the config's output_dir, else results/<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the number of assimilation cycles.
    #[arg(long, global = true)]
    cycles: Option<usize>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a previous run's manifest.json.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the configs in a directory and whether they validate.
    ListConfigs {
        #[arg(long, default_value = "configs")]
        dir: PathBuf,
    },
}

fn list_configs(dir: &Path) -> Result<(), HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    for p in paths {
        match validate_path(&p) {
            Ok(cfg) => {
                let labels: Vec<String> = cfg.filters.iter().map(|f| f.label()).collect();
                println!("{}\t{}\tT={}\t{}", p.display(), cfg.name, cfg.cycles, labels.join(","));
            }
            Err(e) => println!("{}\tINVALID\t{e}", p.display()),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HarnessError::field("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    let opts = RunOptions {
        seed: cli.seed,
        cycles: cli.cycles,
        out: cli.out.clone(),
        base_dir: None,
        verbose: !cli.quiet,
    };
    match cli.command {
        Command::Run { config } => {
            let res = run_path(&config, &opts)?;
            println!("{}", res.output_dir.display());
        }
        Command::Validate { config } => {
            let cfg = validate_path(&config)?;
            let cfg = lsmcmc_harness::experiment::apply_overrides(cfg, &opts);
            println!(
                "{}: ok ({} filters, {} cycles, output {})",
                cfg.name,
                cfg.filters.len(),
                cfg.cycles,
                output_dir(&cfg, &opts).display()
            );
        }
        Command::ListConfigs { dir } => list_configs(&dir)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
