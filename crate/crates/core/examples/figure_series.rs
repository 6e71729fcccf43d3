//! Runs a small grid and turns its run logs into long-format series for
//! plotting target accuracy and both selection error rates.
//!
//! cargo run --release --example figure_series

use std::path::PathBuf;

use wuda::config::ExperimentSpec;
use wuda::runner::{collect_runs, emit_figure_series, run_grid, Quantity};

fn main() -> wuda::Result<()> {
    let mut spec = ExperimentSpec {
        seeds: 2,
        ..ExperimentSpec::default()
    };
    spec.methods = vec!["bnet".parse().unwrap(), "no-check".parse().unwrap()];
    spec.train.schedule.max_epochs = 15;

    let root = std::env::var_os("WUDA_OUTPUT_ROOT").map_or(PathBuf::from("wuda-out"), PathBuf::from);
    let out = root.join("figure-series");
    run_grid(&spec, &out, true)?;

    let runs = collect_runs(&out)?;
    for (name, q) in [("accuracy", Quantity::Accuracy), ("rho01_s", Quantity::Rho01S), ("rho01_t", Quantity::Rho01T)] {
        let (csv, warning) = emit_figure_series(&runs, q);
        if let Some(w) = warning {
            eprintln!("{name}: {w}");
        }
        let path = out.join(format!("figure_{name}.csv"));
        std::fs::write(&path, &csv)?;
        println!("{:<9} {:>4} rows -> {}", name, csv.lines().count() - 1, path.display());
    }
    Ok(())
}
