mod common;

use common::{gradient_check, random_matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wuda::nn::Network;

fn check(batchnorm: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::mlp(&[5, 7, 3], 0.0, batchnorm, false, &mut rng).unwrap();
    let x = random_matrix(6, 5, &mut rng);
    let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
    let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
    gradient_check(&mut net, &x, &y, &w)
}

#[test]
fn plain_two_layer_net_matches_central_differences() {
    for seed in 0..5 {
        let err = check(false, seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn batchnorm_net_matches_central_differences() {
    for seed in 0..5 {
        let err = check(true, seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}
