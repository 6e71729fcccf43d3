//! Compares backprop gradients of a small batch-norm MLP against central
//! differences, parameter by parameter.
//!
//! cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wuda::nn::{cross_entropy, cross_entropy_grad, Matrix, Mode, Network};

fn loss(net: &mut Network, x: &Matrix, y: &[usize]) -> f64 {
    let (logits, _) = net.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    cross_entropy(&logits, y).unwrap().mean
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut net = Network::mlp(&[4, 8, 8, 3], 0.0, true, false, &mut rng).unwrap();
    let x = Matrix::new(10, 4, (0..40).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();

    let (logits, tape) = net.forward(&x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let grads = net.backward(&tape, &cross_entropy_grad(&logits, &y, &[0.1; 10]).unwrap()).unwrap().0;

    let names = ["weights", "bias", "gamma", "beta"];
    let h = 1e-5;
    for layer in 0..net.layers().len() {
        let analytic: Vec<Vec<f64>> = grads.layers[layer].slices().iter().map(|s| s.to_vec()).collect();
        for (p, g) in analytic.iter().enumerate() {
            let mut worst = 0.0f64;
            for (j, &a) in g.iter().enumerate() {
                let orig = net.layers_mut()[layer].params_mut()[p][j];
                net.layers_mut()[layer].params_mut()[p][j] = orig + h;
                let up = loss(&mut net, &x, &y);
                net.layers_mut()[layer].params_mut()[p][j] = orig - h;
                let down = loss(&mut net, &x, &y);
                net.layers_mut()[layer].params_mut()[p][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
            println!("layer {layer} {:<7} {:>3} entries  max rel err {worst:.2e}", names[p], g.len());
        }
    }
}
