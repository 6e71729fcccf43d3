use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{softmax, Matrix, Network, Optimizer, OptimizerKind};

/// Layer widths and optimizer settings for the four-network bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Hidden widths of the shared extractor; the last one is the feature width.
    pub extractor_hidden: Vec<usize>,
    /// Hidden widths of every classifier head.
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub batchnorm: bool,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            extractor_hidden: vec![32],
            head_hidden: vec![32],
            dropout: 0.0,
            batchnorm: true,
            optimizer: OptimizerKind::MomentumSgd { momentum: 0.9 },
            learning_rate: 0.01,
        }
    }
}

/// A shared extractor and two networks alongside it (one branch).
pub struct HeadPair<'a> {
    pub extractor: &'a mut Network,
    pub extractor_opt: &'a mut Optimizer,
    pub a: &'a mut Network,
    pub a_opt: &'a mut Optimizer,
    pub b: &'a mut Network,
    pub b_opt: &'a mut Optimizer,
}

/// Shared feature extractor plus heads F1, F2 (mixture branch) and
/// Ft1, Ft2 (target branch), each with its own optimizer state.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub extractor: Network,
    pub f1: Network,
    pub f2: Network,
    pub ft1: Network,
    pub ft2: Network,
    opt_extractor: Optimizer,
    opt_f1: Optimizer,
    opt_f2: Optimizer,
    opt_ft1: Optimizer,
    opt_ft2: Optimizer,
}

/// How the two target-branch heads are combined at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalHead {
    #[default]
    Average,
    First,
}

impl ModelBundle {
    /// Every network draws its initial weights from its own stream of `seed`.
    pub fn new(input_dim: usize, classes: usize, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.extractor_hidden.is_empty() {
            return Err(Error::InvalidArgument("extractor needs at least one layer".into()));
        }
        let stream = |i: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i);
            r
        };
        let mut ext_dims = vec![input_dim];
        ext_dims.extend(&cfg.extractor_hidden);
        let feat = *ext_dims.last().unwrap();
        let mut head_dims = vec![feat];
        head_dims.extend(&cfg.head_hidden);
        head_dims.push(classes);

        let extractor = Network::mlp(&ext_dims, cfg.dropout, cfg.batchnorm, true, &mut stream(0))?;
        let head = |i| Network::mlp(&head_dims, cfg.dropout, cfg.batchnorm, false, &mut stream(i));
        let opt = || Optimizer::new(cfg.optimizer, cfg.learning_rate);
        Ok(Self {
            extractor,
            f1: head(1)?,
            f2: head(2)?,
            ft1: head(3)?,
            ft2: head(4)?,
            opt_extractor: opt()?,
            opt_f1: opt()?,
            opt_f2: opt()?,
            opt_ft1: opt()?,
            opt_ft2: opt()?,
        })
    }

    pub fn classes(&self) -> usize {
        self.f1.output_dim()
    }

    pub fn branch1(&mut self) -> HeadPair<'_> {
        HeadPair {
            extractor: &mut self.extractor,
            extractor_opt: &mut self.opt_extractor,
            a: &mut self.f1,
            a_opt: &mut self.opt_f1,
            b: &mut self.f2,
            b_opt: &mut self.opt_f2,
        }
    }

    pub fn branch2(&mut self) -> HeadPair<'_> {
        HeadPair {
            extractor: &mut self.extractor,
            extractor_opt: &mut self.opt_extractor,
            a: &mut self.ft1,
            a_opt: &mut self.opt_ft1,
            b: &mut self.ft2,
            b_opt: &mut self.opt_ft2,
        }
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.extractor.infer(x)
    }

    /// Softmax outputs of F1 and F2.
    pub fn branch1_probs(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let f = self.features(x)?;
        Ok((softmax(&self.f1.infer(&f)?), softmax(&self.f2.infer(&f)?)))
    }

    /// Softmax outputs of Ft1 and Ft2.
    pub fn branch2_probs(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let f = self.features(x)?;
        Ok((softmax(&self.ft1.infer(&f)?), softmax(&self.ft2.infer(&f)?)))
    }

    /// Class probabilities of the target-branch output.
    pub fn predict_proba(&self, x: &Matrix, head: EvalHead) -> Result<Matrix> {
        let (p1, p2) = self.branch2_probs(x)?;
        Ok(match head {
            EvalHead::First => p1,
            EvalHead::Average => average_probs(&p1, &p2),
        })
    }

    pub fn networks(&self) -> [(&'static str, &Network); 5] {
        [
            ("extractor", &self.extractor),
            ("f1", &self.f1),
            ("f2", &self.f2),
            ("ft1", &self.ft1),
            ("ft2", &self.ft2),
        ]
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save_checkpoint(path, &self.networks())
    }
}

pub fn average_probs(p1: &Matrix, p2: &Matrix) -> Matrix {
    let mut out = p1.clone();
    for (o, b) in out.data_mut().iter_mut().zip(p2.data()) {
        *o = 0.5 * (*o + b);
    }
    out
}
