//! Pair-flipped source labels: denoise-then-adapt against joint Butterfly
//! training on the same data draw.
//!
//! cargo run --release --example two_step_baseline -- [rho] [seed]

use wuda::config::{ExperimentSpec, Method};
use wuda::noise::NoiseKind;
use wuda::runner::{prepare_cell_data, run_cell};

fn main() -> wuda::Result<()> {
    let mut args = std::env::args().skip(1);
    let rho: f64 = args.next().map_or(0.45, |s| s.parse().expect("rho"));
    let seed: usize = args.next().map_or(0, |s| s.parse().expect("seed"));

    let mut spec = ExperimentSpec::default();
    spec.noise.kind = NoiseKind::Pair;
    spec.noise.rho = rho;
    let data = prepare_cell_data(&spec, seed)?;

    let two = run_cell(&spec, &data, Method::TwoStep, seed)?;
    let one = run_cell(&spec, &data, "bnet".parse().unwrap(), seed)?;
    println!(
        "step-1 relabel accuracy {:.4} (source labels were {:.4} correct)",
        two.log.relabel_accuracy.unwrap_or(f64::NAN),
        1.0 - data.noisy.oracle().corrupted_fraction()
    );
    for (name, run) in [("two-step", &two), ("bnet", &one)] {
        let s = run.log.summary().expect("epochs");
        println!(
            "{name:<9} final {:.4}  best {:.4} @ {}  last-5 mean {:.4}",
            s.final_accuracy, s.best_accuracy, s.best_epoch, s.mean_last5
        );
    }
    Ok(())
}
