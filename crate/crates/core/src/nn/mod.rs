//! Dense-layer training engine shared by all four networks.

pub mod checkpoint;
pub mod layer;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod optim;

pub use layer::{Activation, BatchNorm, DenseLayer, LayerGrads, LayerSpec, Mode};
pub use loss::{cross_entropy, cross_entropy_grad, softmax, CrossEntropy};
pub use matrix::Matrix;
pub use network::{Gradients, Network, Tape};
pub use optim::{Optimizer, OptimizerKind};
