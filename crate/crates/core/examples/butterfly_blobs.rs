//! Trains full B-Net and the all-checks-off ablation on rotated blobs with
//! noisy source labels and prints target accuracy per epoch.
//!
//! cargo run --release --example butterfly_blobs -- [rho] [seed]

use std::time::Instant;

use wuda::butterfly::ButterflyVariant;
use wuda::config::{ExperimentSpec, Method};
use wuda::runner::{prepare_cell_data, run_cell};

fn main() -> wuda::Result<()> {
    let mut args = std::env::args().skip(1);
    let rho: f64 = args.next().map_or(0.45, |s| s.parse().expect("rho"));
    let seed: usize = args.next().map_or(0, |s| s.parse().expect("seed"));

    let mut spec = ExperimentSpec::default();
    spec.noise.rho = rho;
    let data = prepare_cell_data(&spec, seed)?;
    println!(
        "source {} (corrupted {:.3}), target {}",
        data.noisy.len(),
        data.noisy.oracle().corrupted_fraction(),
        data.pair.target_len()
    );

    for variant in [ButterflyVariant::BNET, ButterflyVariant::NO_CHECK] {
        let t = Instant::now();
        let run = run_cell(&spec, &data, Method::Butterfly(variant), seed)?;
        println!("\n{variant} ({:.1?})", t.elapsed());
        println!("epoch  acc     rho01_s  rho01_t  n_pseudo  pseudo_acc");
        for r in &run.log.records {
            println!(
                "{:>5}  {:.4}  {:>7}  {:>7}  {:>8}  {:>10}",
                r.epoch,
                r.target_accuracy,
                r.rho01_s.map_or("-".into(), |v| format!("{v:.4}")),
                r.rho01_t.map_or("-".into(), |v| format!("{v:.4}")),
                r.n_pseudo,
                r.pseudo_label_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
            );
        }
    }
    Ok(())
}
