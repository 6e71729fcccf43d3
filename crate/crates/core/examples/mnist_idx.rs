//! Rotated-MNIST adaptation from IDX files: the first 10000 training images
//! form the source, the next 5000 rotated by 45 degrees form the target.
//!
//! cargo run --release --example mnist_idx -- <dir with train-images-idx3-ubyte and train-labels-idx1-ubyte>

use std::path::PathBuf;

use wuda::config::{DataSpec, ExperimentSpec};
use wuda::runner::{prepare_cell_data, run_cell};

fn main() -> wuda::Result<()> {
    let Some(dir) = std::env::args().nth(1).map(PathBuf::from) else {
        eprintln!("usage: mnist_idx <mnist dir>");
        std::process::exit(1);
    };
    let mut spec = ExperimentSpec {
        data: DataSpec::Idx {
            images: dir.join("train-images-idx3-ubyte"),
            labels: dir.join("train-labels-idx1-ubyte"),
            n_source: 10_000,
            n_target: 5_000,
            rotation: std::f64::consts::FRAC_PI_4,
        },
        ..ExperimentSpec::default()
    };
    spec.noise.rho = 0.2;
    spec.model.extractor_hidden = vec![256, 64];
    spec.model.head_hidden = vec![64];

    let data = prepare_cell_data(&spec, 0)?;
    println!("source {} images, target {} rotated images", data.noisy.len(), data.pair.target_len());
    for method in ["bnet", "no-check"] {
        let run = run_cell(&spec, &data, method.parse().unwrap(), 0)?;
        let s = run.log.summary().expect("epochs");
        println!("{method:<9} final {:.4}  best {:.4}", s.final_accuracy, s.best_accuracy);
    }
    Ok(())
}
