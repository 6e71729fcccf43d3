use rand::Rng;

use super::layer::{Activation, DenseLayer, LayerCache, LayerGrads, LayerSpec, Mode};
use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};

/// Ordered stack of dense layers. The last layer's width is the class count
/// when the network is used as a classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    version: u64,
}

/// Intermediates cached by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    caches: Vec<LayerCache>,
    version: u64,
    mode: Mode,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(LayerGrads::slices).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(LayerGrads::slices_mut).collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        let theirs = other.slices();
        let mine = self.slices_mut();
        if mine.len() != theirs.len() {
            return Err(shape_err("Gradients::add_assign", mine.len(), theirs.len()));
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            if a.len() != b.len() {
                return Err(shape_err("Gradients::add_assign", a.len(), b.len()));
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.slices_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(shape_err("Network::new", w[0].out_dim(), w[1].in_dim()));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn from_specs<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| DenseLayer::new(*s, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    /// Multi-layer perceptron over `dims` (input, hidden..., output). Hidden
    /// layers are ReLU with the given dropout/batchnorm; the output layer is
    /// a plain affine map. With `final_relu` the last layer is a hidden-style
    /// layer too, which is what a feature extractor wants.
    pub fn mlp<R: Rng + ?Sized>(
        dims: &[usize],
        dropout: f64,
        batchnorm: bool,
        final_relu: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("mlp needs input and output dims".into()));
        }
        let n = dims.len() - 1;
        let specs: Vec<LayerSpec> = (0..n)
            .map(|i| {
                let hidden = i + 1 < n || final_relu;
                LayerSpec {
                    in_dim: dims[i],
                    out_dim: dims[i + 1],
                    activation: if hidden { Activation::Relu } else { Activation::Identity },
                    dropout: if hidden { dropout } else { 0.0 },
                    batchnorm: hidden && batchnorm,
                }
            })
            .collect();
        Self::from_specs(&specs, rng)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the layers; counts as a parameter change.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_params(&self) -> usize {
        Gradients::zeros_like(self).slices().iter().map(|s| s.len()).sum()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(DenseLayer::params_mut).collect()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(shape_err(
                "forward",
                format!("{} input columns", self.input_dim()),
                format!("batch of shape {}x{}", batch.rows(), batch.cols()),
            ));
        }
        Ok(())
    }

    /// Runs the network. Train mode samples dropout masks from `rng` and
    /// updates batchnorm running statistics; Eval mode is deterministic.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, Tape)> {
        self.check_input(batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &mut self.layers {
            let (y, cache) = layer.forward(&x, mode, rng)?;
            caches.push(cache);
            x = y;
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("forward activations"));
        }
        Ok((
            x,
            Tape {
                caches,
                version: self.version,
                mode,
            },
        ))
    }

    /// Eval-mode forward through a shared reference.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Backpropagates `loss_grad` (d loss / d output) through the tape.
    /// Returns parameter gradients and d loss / d input.
    pub fn backward(&self, tape: &Tape, loss_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        if tape.version != self.version {
            return Err(Error::StaleTape {
                tape: tape.version,
                network: self.version,
            });
        }
        if tape.mode != Mode::Train {
            return Err(Error::EvalTape);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = loss_grad.clone();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            let (lg, gin) = layer.backward(cache, &g)?;
            grads.push(lg);
            g = gin;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weights: Matrix, activation: Activation) -> Network {
        let out = weights.cols();
        Network::new(vec![DenseLayer {
            weights,
            bias: vec![0.0; out],
            activation,
            dropout_rate: 0.0,
            batchnorm: None,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = single(Matrix::identity(2), Activation::Identity);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_layer_clips_negative() {
        let mut net = single(Matrix::identity(2), Activation::Relu);
        let x = Matrix::from_rows(&[vec![-3.0, 4.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y.data(), &[0.0, 4.0]);
    }

    #[test]
    fn eval_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Network::mlp(&[3, 8, 8, 4], 0.5, true, false, &mut rng).unwrap();
        let x = Matrix::new(2, 3, vec![0.1, -0.4, 2.0, 1.5, 0.0, -1.0]).unwrap();
        let (a, _) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        let (b, _) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(net.infer(&x).unwrap().data(), a.data());
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::mlp(&[3, 4, 2], 0.0, false, false, &mut rng).unwrap();
        let err = net.forward(&Matrix::zeros(1, 5), Mode::Eval, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::mlp(&[3, 5, 2], 0.0, true, false, &mut rng).unwrap();
        let x = Matrix::new(4, 3, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let (y, tape) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let (g, gin) = net.backward(&tape, &Matrix::zeros(y.rows(), y.cols())).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(gin.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_gradient_matches_hand_formula() {
        // y = x W + b, loss = ½ (y - t)²  ⇒  dW = xᵀ (y - t), db = y - t
        let w = Matrix::new(2, 1, vec![0.5, -1.0]).unwrap();
        let mut net = single(w, Activation::Identity);
        net.layers_mut()[0].bias = vec![0.25];
        let x = Matrix::new(1, 2, vec![2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, tape) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        // y = 1 - 3 + 0.25 = -1.75, target 1 → residual -2.75
        assert_eq!(y.data(), &[-1.75]);
        let resid = Matrix::new(1, 1, vec![-2.75]).unwrap();
        let (g, gin) = net.backward(&tape, &resid).unwrap();
        assert_eq!(g.layers[0].weights.data(), &[-5.5, -8.25]);
        assert_eq!(g.layers[0].bias, vec![-2.75]);
        assert_eq!(gin.data(), &[-1.375, 2.75]);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::mlp(&[2, 3, 2], 0.0, false, false, &mut rng).unwrap();
        let x = Matrix::zeros(2, 2);
        let (y, tape) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        net.layers_mut()[0].bias[0] += 1.0;
        let err = net.backward(&tape, &Matrix::zeros(y.rows(), y.cols())).unwrap_err();
        assert!(matches!(err, Error::StaleTape { .. }));
    }

    #[test]
    fn eval_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::mlp(&[2, 3, 2], 0.0, false, false, &mut rng).unwrap();
        let (y, tape) = net.forward(&Matrix::zeros(1, 2), Mode::Eval, &mut rng).unwrap();
        let err = net.backward(&tape, &Matrix::zeros(y.rows(), y.cols())).unwrap_err();
        assert!(matches!(err, Error::EvalTape));
    }

    #[test]
    fn dropout_preserves_expected_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = LayerSpec {
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Identity,
            dropout: 0.5,
            batchnorm: false,
        };
        let mut net = Network::from_specs(&[spec], &mut rng).unwrap();
        net.layers_mut()[0].weights = Matrix::new(1, 1, vec![1.0]).unwrap();
        net.layers_mut()[0].bias = vec![0.0];
        let x = Matrix::new(1, 1, vec![2.0]).unwrap();
        let eval = net.infer(&x).unwrap()[(0, 0)];
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| net.forward(&x, Mode::Train, &mut rng).unwrap().0[(0, 0)])
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - eval).abs() < 3.0 * se, "mean {mean} eval {eval} se {se}");
    }

    #[test]
    fn batchnorm_running_stats_move_only_in_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::mlp(&[2, 3, 2], 0.0, true, false, &mut rng).unwrap();
        let x = Matrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0]).unwrap();
        let before = net.layers()[0].batchnorm.clone();
        net.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(net.layers()[0].batchnorm, before);
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        assert_ne!(net.layers()[0].batchnorm, before);
    }
}
