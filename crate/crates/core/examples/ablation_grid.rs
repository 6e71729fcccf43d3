//! Runs every preset variant on the heavy-noise blobs task and prints the
//! grid summary. Artifacts go to `$WUDA_OUTPUT_ROOT/ablation` (default
//! `wuda-out/ablation`).
//!
//! cargo run --release --example ablation_grid -- [seeds]

use std::path::PathBuf;

use wuda::butterfly::ButterflyVariant;
use wuda::config::{ExperimentSpec, Method};
use wuda::runner::run_grid;

fn main() -> wuda::Result<()> {
    let seeds = std::env::args().nth(1).map_or(2, |s| s.parse().expect("seeds"));
    let mut spec = ExperimentSpec {
        seeds,
        ..ExperimentSpec::default()
    };
    spec.methods = ButterflyVariant::PRESETS.iter().map(|(_, v)| Method::Butterfly(*v)).collect();
    spec.methods.push(Method::TwoStep);

    let root = std::env::var_os("WUDA_OUTPUT_ROOT").map_or(PathBuf::from("wuda-out"), PathBuf::from);
    let out = root.join("ablation");
    let report = run_grid(&spec, &out, true)?;
    println!("{:<10} {:>6} {:>8} {:>8}", "variant", "runs", "mean", "std");
    for r in &report.rows {
        println!("{:<10} {:>6} {:>8.4} {:>8.4}", r.method.to_string(), r.runs, r.mean, r.std);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
