//! Follows one B-Net run epoch by epoch: how much label noise survives the
//! small-loss checks in each branch, the envelope constant for the source
//! series, and the selected-sample risk terms.
//!
//! cargo run --release --example checking_diagnostics -- [rho]

use wuda::config::ExperimentSpec;
use wuda::metrics::envelope_fit;
use wuda::runner::{prepare_cell_data, run_cell};

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn main() -> wuda::Result<()> {
    let rho: f64 = std::env::args().nth(1).map_or(0.2, |s| s.parse().expect("rho"));
    let mut spec = ExperimentSpec::default();
    spec.noise.rho = rho;
    let data = prepare_cell_data(&spec, 0)?;
    let run = run_cell(&spec, &data, "bnet".parse().unwrap(), 0)?;

    println!("epoch  rho01_s  rho01_t  clean_sel  bound_a  bound_b  bound_c  2a+2b+c");
    for r in &run.log.records {
        println!(
            "{:>5}  {:>7}  {:>7}  {:>9}  {:>7}  {:>7}  {:>7}  {:>7}",
            r.epoch,
            fmt(r.rho01_s),
            fmt(r.rho01_t),
            fmt(r.branch1_clean_fraction),
            fmt(r.bound.a),
            fmt(r.bound.b),
            fmt(r.bound.c),
            fmt(r.bound.composite()),
        );
    }
    let fit = envelope_fit(&run.log.series(|r| r.rho01_s), data.noisy.len())?;
    println!(
        "\nrho01_s <= C/sqrt(n T) with C = {:.3} (n = {}); {}",
        fit.c,
        fit.n,
        if fit.decreasing { "decreasing" } else { "not decreasing" }
    );
    Ok(())
}
