#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wuda::butterfly::ButterflyVariant;
use wuda::config::{DataSpec, ExperimentSpec, Method};
use wuda::datasets::BlobConfig;
use wuda::nn::{cross_entropy, cross_entropy_grad, Matrix, Mode, Network};
use wuda::noise::NoiseKind;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted cross-entropy of a train-mode forward pass.
fn weighted_loss(net: &mut Network, x: &Matrix, y: &[usize], w: &[f64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = net.forward(x, Mode::Train, &mut rng).unwrap();
    let ce = cross_entropy(&logits, y).unwrap();
    ce.per_sample.iter().zip(w).map(|(l, w)| l * w).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between analytic gradients (parameters and
/// input) and central differences of the weighted cross-entropy.
pub fn gradient_check(net: &mut Network, x: &Matrix, y: &[usize], w: &[f64]) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, tape) = net.forward(x, Mode::Train, &mut rng).unwrap();
    let dlogits = cross_entropy_grad(&logits, y, w).unwrap();
    let (grads, dx) = net.backward(&tape, &dlogits).unwrap();

    let mut worst = 0.0f64;
    for li in 0..net.layers().len() {
        let analytic: Vec<Vec<f64>> = grads.layers[li].slices().iter().map(|s| s.to_vec()).collect();
        for (pi, a) in analytic.iter().enumerate() {
            for (j, &g) in a.iter().enumerate() {
                let orig = net.layers_mut()[li].params_mut()[pi][j];
                net.layers_mut()[li].params_mut()[pi][j] = orig + H;
                let up = weighted_loss(net, x, y, w);
                net.layers_mut()[li].params_mut()[pi][j] = orig - H;
                let down = weighted_loss(net, x, y, w);
                net.layers_mut()[li].params_mut()[pi][j] = orig;
                worst = worst.max(rel_err(g, (up - down) / (2.0 * H)));
            }
        }
    }
    let mut xp = x.clone();
    for j in 0..x.data().len() {
        let orig = xp.data()[j];
        xp.data_mut()[j] = orig + H;
        let up = weighted_loss(net, &xp, y, w);
        xp.data_mut()[j] = orig - H;
        let down = weighted_loss(net, &xp, y, w);
        xp.data_mut()[j] = orig;
        worst = worst.max(rel_err(dx.data()[j], (up - down) / (2.0 * H)));
    }
    worst
}

/// The rotated-blobs task: K=4, d=10, 4000 source, 2000 target, rotation π/6.
pub fn blobs_spec(kind: NoiseKind, rho: f64, methods: &[Method], seeds: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        data: DataSpec::Blobs(BlobConfig {
            classes: 4,
            dim: 10,
            n_source: 4000,
            n_target: 2000,
            rotation: std::f64::consts::FRAC_PI_6,
            translation: Vec::new(),
        }),
        seeds,
        methods: methods.to_vec(),
        ..ExperimentSpec::default()
    };
    spec.noise.kind = kind;
    spec.noise.rho = rho;
    spec
}

pub const BNET: Method = Method::Butterfly(ButterflyVariant::BNET);
pub const NO_CHECK: Method = Method::Butterfly(ButterflyVariant::NO_CHECK);
