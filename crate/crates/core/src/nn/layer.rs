use rand::Rng;

use super::matrix::Matrix;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_DECAY: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }
}

/// Shape and regularization options for one dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub batchnorm: bool,
}

/// Affine map followed by optional batch normalization, activation and
/// inverted dropout, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in_dim × out_dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub batchnorm: Option<BatchNorm>,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    input: Matrix,
    bn: Option<BnCache>,
    pre_activation: Matrix,
    dropout_mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        let (i, o) = layer.weights.shape();
        Self {
            weights: Matrix::zeros(i, o),
            bias: vec![0.0; o],
            gamma: layer.batchnorm.as_ref().map(|_| vec![0.0; o]),
            beta: layer.batchnorm.as_ref().map(|_| vec![0.0; o]),
        }
    }

    /// Parameter slices in the same order as [`DenseLayer::params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weights.data(), &self.bias];
        if let (Some(g), Some(b)) = (&self.gamma, &self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weights.data_mut(), &mut self.bias];
        if let (Some(g), Some(b)) = (&mut self.gamma, &mut self.beta) {
            v.push(g);
            v.push(b);
        }
        v
    }
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(shape_err("DenseLayer::new", "positive dims", format!("{}x{}", spec.in_dim, spec.out_dim)));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(crate::Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                spec.dropout
            )));
        }
        let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        let data = (0..spec.in_dim * spec.out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Self {
            weights: Matrix::new(spec.in_dim, spec.out_dim, data)?,
            bias: vec![0.0; spec.out_dim],
            activation: spec.activation,
            dropout_rate: spec.dropout,
            batchnorm: spec.batchnorm.then(|| BatchNorm::new(spec.out_dim)),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weights.data_mut(), &mut self.bias];
        if let Some(bn) = &mut self.batchnorm {
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, LayerCache)> {
        let mut z = input.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }

        let bn_cache = match (&mut self.batchnorm, mode) {
            (Some(bn), Mode::Train) => Some(batchnorm_train(bn, &mut z)),
            (Some(bn), Mode::Eval) => {
                batchnorm_eval(bn, &mut z);
                None
            }
            (None, _) => None,
        };

        let pre_activation = z.clone();
        if self.activation == Activation::Relu {
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }

        let dropout_mask = if mode == Mode::Train && self.dropout_rate > 0.0 {
            let keep = 1.0 - self.dropout_rate;
            let mask: Vec<f64> = (0..z.data().len())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            z.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        } else {
            None
        };

        Ok((
            z,
            LayerCache {
                input: input.clone(),
                bn: bn_cache,
                pre_activation,
                dropout_mask,
            },
        ))
    }

    /// Eval-mode forward that leaves the layer untouched.
    pub(crate) fn infer(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        if let Some(bn) = &self.batchnorm {
            batchnorm_eval(bn, &mut z);
        }
        if self.activation == Activation::Relu {
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(z)
    }

    /// Returns parameter gradients and the gradient w.r.t. the layer input.
    pub(crate) fn backward(&self, cache: &LayerCache, grad_out: &Matrix) -> Result<(LayerGrads, Matrix)> {
        let mut g = grad_out.clone();
        if let Some(mask) = &cache.dropout_mask {
            g.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        if self.activation == Activation::Relu {
            g.data_mut()
                .iter_mut()
                .zip(cache.pre_activation.data())
                .for_each(|(v, &a)| {
                    if a <= 0.0 {
                        *v = 0.0
                    }
                });
        }

        let (gamma_grad, beta_grad) = match (&self.batchnorm, &cache.bn) {
            (Some(bn), Some(c)) => {
                let (dg, db) = batchnorm_backward(bn, c, &mut g);
                (Some(dg), Some(db))
            }
            _ => (None, None),
        };

        let weights = cache.input.t_matmul(&g)?;
        let bias = g.sum_rows();
        let grad_in = g.matmul_t(&self.weights)?;
        Ok((
            LayerGrads {
                weights,
                bias,
                gamma: gamma_grad,
                beta: beta_grad,
            },
            grad_in,
        ))
    }
}

fn batchnorm_train(bn: &mut BatchNorm, z: &mut Matrix) -> BnCache {
    let n = z.rows() as f64;
    let mean: Vec<f64> = z.sum_rows().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; z.cols()];
    for r in z.iter_rows() {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    for j in 0..mean.len() {
        bn.running_mean[j] = BN_DECAY * bn.running_mean[j] + (1.0 - BN_DECAY) * mean[j];
        bn.running_var[j] = BN_DECAY * bn.running_var[j] + (1.0 - BN_DECAY) * var[j];
    }

    let mut xhat = z.clone();
    for r in 0..z.rows() {
        let xr = xhat.row_mut(r);
        for j in 0..xr.len() {
            xr[j] = (xr[j] - mean[j]) * inv_std[j];
        }
        let zr = z.row_mut(r);
        for j in 0..zr.len() {
            zr[j] = bn.gamma[j] * xr[j] + bn.beta[j];
        }
    }
    BnCache { xhat, inv_std }
}

fn batchnorm_eval(bn: &BatchNorm, z: &mut Matrix) {
    for r in 0..z.rows() {
        for (j, v) in z.row_mut(r).iter_mut().enumerate() {
            let xhat = (*v - bn.running_mean[j]) / (bn.running_var[j] + BN_EPS).sqrt();
            *v = bn.gamma[j] * xhat + bn.beta[j];
        }
    }
}

/// Rewrites `g` from d(out) to d(pre-normalization) and returns (dγ, dβ).
fn batchnorm_backward(bn: &BatchNorm, c: &BnCache, g: &mut Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = g.rows() as f64;
    let cols = g.cols();
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    for r in 0..g.rows() {
        for j in 0..cols {
            dgamma[j] += g[(r, j)] * c.xhat[(r, j)];
            dbeta[j] += g[(r, j)];
        }
    }
    // dxhat = g·γ; Σdxhat = γ·dβ; Σ(dxhat·xhat) = γ·dγ
    for r in 0..g.rows() {
        for j in 0..cols {
            let dxhat = g[(r, j)] * bn.gamma[j];
            g[(r, j)] = c.inv_std[j] / n
                * (n * dxhat - bn.gamma[j] * dbeta[j] - c.xhat[(r, j)] * bn.gamma[j] * dgamma[j]);
        }
    }
    (dgamma, dbeta)
}
