use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wuda::config::{ExperimentSpec, Method};
use wuda::runner::{collect_runs, emit_figure_series, run_grid, Quantity};
use wuda::Error;

/// Butterfly experiments on noisy-source domain adaptation.
#[derive(Parser)]
#[command(name = "wuda", version)]
struct Cli {
    /// Run grid cells one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, variant) cell of a config.
    Run { config: PathBuf },
    /// Run a config over seeds 0..N.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seeds: usize,
    },
    /// Run a config for a list of variants.
    Ablate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Write a long-format series from the run logs under DIR.
    Figure {
        dir: PathBuf,
        #[arg(long, default_value = "accuracy")]
        quantity: String,
    },
}

const OUTPUT_ROOT_VAR: &str = "WUDA_OUTPUT_ROOT";

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn output_dir(spec: &ExperimentSpec, config: &Path) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from("wuda-out"));
    let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    root.join(stem)
}

fn grid(spec: ExperimentSpec, config: &Path, parallel: bool) -> Result<(), Failure> {
    spec.validate()?;
    let out = output_dir(&spec, config);
    let report = run_grid(&spec, &out, parallel)?;
    for row in &report.rows {
        println!("{:<10} n={} mean={:.4} std={:.4}", row.method.to_string(), row.runs, row.mean, row.std);
    }
    println!("artifacts in {}", out.display());
    let failed: Vec<_> = report.failures().collect();
    if failed.is_empty() {
        return Ok(());
    }
    for c in &failed {
        eprintln!("cell {} seed {} failed: {}", c.method, c.seed_index, c.outcome.as_ref().unwrap_err());
    }
    Err(Failure::Runtime(format!("{} cell(s) failed; see failures.csv", failed.len())))
}

fn load(config: &Path) -> Result<ExperimentSpec, Failure> {
    ExperimentSpec::from_path(config).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("{}: {io}", config.display())),
        other => other.into(),
    })
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let parallel = !cli.sequential;
    match cli.command {
        Command::Run { config } => grid(load(&config)?, &config, parallel),
        Command::Sweep { config, seeds } => {
            let mut spec = load(&config)?;
            spec.seeds = seeds;
            grid(spec, &config, parallel)
        }
        Command::Ablate { config, variants } => {
            let mut spec = load(&config)?;
            spec.methods = variants
                .iter()
                .map(|v| v.parse::<Method>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Config(format!("--variants: {e}")))?;
            grid(spec, &config, parallel)
        }
        Command::Figure { dir, quantity } => {
            let q: Quantity = quantity.parse().map_err(|e| Failure::Config(format!("--quantity: {e}")))?;
            let runs = collect_runs(&dir)?;
            if runs.is_empty() {
                return Err(Failure::Runtime(format!("no run logs under {}", dir.display())));
            }
            let (csv, warning) = emit_figure_series(&runs, q);
            if let Some(w) = warning {
                eprintln!("warning: {w}");
            }
            let path = dir.join(format!("figure_{quantity}.csv"));
            std::fs::write(&path, csv).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
