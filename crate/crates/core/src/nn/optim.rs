use super::network::{Gradients, Network};
use crate::error::{shape_err, Error, Result};

pub const ADAGRAD_EPS: f64 = 1e-8;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `v ← μv − ηg; p ← p + v`
    MomentumSgd { momentum: f64 },
    /// `a ← a + g²; p ← p − ηg / √(a + ε)`
    Adagrad,
}

/// First-order optimizer with one state buffer per parameter slice.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    state: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {learning_rate}")));
        }
        if let OptimizerKind::MomentumSgd { momentum } = kind {
            if !(0.0..1.0).contains(&momentum) {
                return Err(Error::InvalidArgument(format!("momentum {momentum} outside [0, 1)")));
            }
        }
        Ok(Self {
            kind,
            learning_rate,
            state: Vec::new(),
        })
    }

    pub fn momentum_sgd(learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::new(OptimizerKind::MomentumSgd { momentum }, learning_rate)
    }

    pub fn adagrad(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adagrad, learning_rate)
    }

    /// Applies one update. Nothing is written unless every new value is finite.
    pub fn step_slices(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err("optimizer_step", params.len(), grads.len()));
        }
        if self.state.is_empty() {
            self.state = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.state.len() != params.len() {
            return Err(shape_err("optimizer_step", self.state.len(), params.len()));
        }

        let lr = self.learning_rate;
        let mut next_state = Vec::with_capacity(params.len());
        let mut next_params = Vec::with_capacity(params.len());
        for ((p, g), s) in params.iter().zip(&grads).zip(&self.state) {
            if p.len() != g.len() || p.len() != s.len() {
                return Err(shape_err("optimizer_step", p.len(), g.len()));
            }
            let mut ns = s.clone();
            let mut np = p.to_vec();
            match self.kind {
                OptimizerKind::MomentumSgd { momentum } => {
                    for i in 0..np.len() {
                        ns[i] = momentum * ns[i] - lr * g[i];
                        np[i] += ns[i];
                    }
                }
                OptimizerKind::Adagrad => {
                    for i in 0..np.len() {
                        ns[i] += g[i] * g[i];
                        np[i] -= lr * g[i] / (ns[i] + ADAGRAD_EPS).sqrt();
                    }
                }
            }
            if !np.iter().chain(&ns).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("optimizer update"));
            }
            next_state.push(ns);
            next_params.push(np);
        }
        for (p, np) in params.into_iter().zip(next_params) {
            p.copy_from_slice(&np);
        }
        self.state = next_state;
        Ok(())
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        self.step_slices(net.params_mut(), grads.slices())
    }
}
