//! Builds symmetry and pair flipping matrices, corrupts 100k labels with each
//! and prints how far the empirical transition matrix lands from the target.
//!
//! cargo run --release --example noise_calibration

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wuda::datasets::LabeledDataset;
use wuda::nn::Matrix;
use wuda::noise::{corrupt, empirical_transition, TransitionMatrix};

fn show(q: &TransitionMatrix) {
    for i in 0..q.classes() {
        let row: Vec<String> = q.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> wuda::Result<()> {
    println!("symmetry, K=5, rho=0.4");
    show(&TransitionMatrix::symmetry(5, 0.4)?);
    println!("pair, K=5, rho=0.4");
    show(&TransitionMatrix::pair(5, 0.4)?);

    let n = 100_000;
    let clean = LabeledDataset::new(Matrix::zeros(n, 1), (0..n).map(|i| i % 10).collect(), 10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    println!("\nK=10, n={n}");
    for rho in [0.2, 0.45] {
        for (name, q) in [
            ("symmetry", TransitionMatrix::symmetry(10, rho)?),
            ("pair", TransitionMatrix::pair(10, rho)?),
        ] {
            let noisy = corrupt(&clean, &q, &mut rng)?;
            let est = empirical_transition(&noisy, 10)?;
            println!(
                "  {name:<8} rho={rho:<4}  flipped {:.4}  max |Q_hat - Q| {:.4}",
                noisy.oracle().corrupted_fraction(),
                est.max_abs_diff(&q)
            );
        }
    }
    Ok(())
}
