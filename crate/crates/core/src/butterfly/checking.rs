//! Cross-update step: each head picks its small-loss samples, and its peer
//! is trained on that pick.

use rand::Rng;

use super::bundle::HeadPair;
use super::selection::{selection_loss, small_loss_select_among, SelectionMask};
use crate::error::{shape_err, Error, Result};
use crate::nn::{cross_entropy, cross_entropy_grad, Matrix, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegularizerNorm {
    /// Sum of absolute entries of `W₁ᵀW₂`.
    #[default]
    AbsSum,
    /// Frobenius norm of `W₁ᵀW₂`.
    Frobenius,
}

/// Penalty on the product of the two heads' first-layer weights, pushing
/// them onto different features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub penalty: f64,
    pub norm: RegularizerNorm,
}

/// Value of `‖W₁ᵀW₂‖` and its gradients with respect to `W₁` and `W₂`.
pub fn weight_product_penalty(w1: &Matrix, w2: &Matrix, norm: RegularizerNorm) -> Result<(f64, Matrix, Matrix)> {
    if w1.shape() != w2.shape() {
        return Err(shape_err(
            "weight_product_penalty",
            format!("{:?}", w1.shape()),
            format!("{:?}", w2.shape()),
        ));
    }
    let m = w1.t_matmul(w2)?;
    let (value, s) = match norm {
        RegularizerNorm::AbsSum => {
            let mut s = m.clone();
            s.data_mut().iter_mut().for_each(|v| {
                *v = if *v > 0.0 {
                    1.0
                } else if *v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            (m.data().iter().map(|v| v.abs()).sum(), s)
        }
        RegularizerNorm::Frobenius => {
            let f = m.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut s = m.clone();
            if f > 0.0 {
                s.scale(1.0 / f);
            }
            (f, s)
        }
    };
    // d/dW1 = W2 Sᵀ, d/dW2 = W1 S
    let g1 = w2.matmul_t(&s)?;
    let g2 = w1.matmul(&s)?;
    Ok((value, g1, g2))
}

#[derive(Debug, Clone, Copy)]
pub struct CheckingOptions<'a> {
    /// Remember rate.
    pub alpha: f64,
    /// Samples allowed to be discarded; `None` means all of them.
    pub eligible: Option<&'a [bool]>,
    pub regularizer: Option<Regularizer>,
    pub update_extractor: bool,
}

impl CheckingOptions<'_> {
    pub fn plain(alpha: f64) -> Self {
        Self {
            alpha,
            eligible: None,
            regularizer: None,
            update_extractor: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckingOutcome {
    /// Picked by head `a` from its own losses; trains head `b`.
    pub mask_a: SelectionMask,
    /// Picked by head `b`; trains head `a`.
    pub mask_b: SelectionMask,
    pub losses_a: Vec<f64>,
    pub losses_b: Vec<f64>,
    /// Loss head `a` was trained on, `L(θ_a, u_b)`.
    pub trained_loss_a: f64,
    pub trained_loss_b: f64,
    pub penalty_value: f64,
}

/// One mini-batch of cross-update training on a head pair.
pub fn checking_step<R: Rng + ?Sized>(
    pair: &mut HeadPair<'_>,
    x: &Matrix,
    y: &[usize],
    opts: &CheckingOptions<'_>,
    rng: &mut R,
) -> Result<CheckingOutcome> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("checking step needs a non-empty batch".into()));
    }
    if x.rows() != y.len() {
        return Err(shape_err("checking_step", x.rows(), y.len()));
    }

    let (feat, ext_tape) = pair.extractor.forward(x, Mode::Train, rng)?;
    let (logits_a, tape_a) = pair.a.forward(&feat, Mode::Train, rng)?;
    let (logits_b, tape_b) = pair.b.forward(&feat, Mode::Train, rng)?;
    let losses_a = cross_entropy(&logits_a, y)?.per_sample;
    let losses_b = cross_entropy(&logits_b, y)?.per_sample;

    let mask_a = small_loss_select_among(&losses_a, opts.alpha, opts.eligible)?;
    let mask_b = small_loss_select_among(&losses_b, opts.alpha, opts.eligible)?;

    let dlogits_a = cross_entropy_grad(&logits_a, y, &mask_b.weights())?;
    let dlogits_b = cross_entropy_grad(&logits_b, y, &mask_a.weights())?;
    let (mut grad_a, dfeat_a) = pair.a.backward(&tape_a, &dlogits_a)?;
    let (mut grad_b, dfeat_b) = pair.b.backward(&tape_b, &dlogits_b)?;

    let mut penalty_value = 0.0;
    if let Some(reg) = opts.regularizer.filter(|r| r.penalty != 0.0) {
        let (v, g1, g2) =
            weight_product_penalty(&pair.a.layers()[0].weights, &pair.b.layers()[0].weights, reg.norm)?;
        penalty_value = reg.penalty * v;
        for (g, d) in [(&mut grad_a, g1), (&mut grad_b, g2)] {
            for (gw, dw) in g.layers[0].weights.data_mut().iter_mut().zip(d.data()) {
                *gw += reg.penalty * dw;
            }
        }
    }

    let mut dfeat = dfeat_a;
    dfeat.add_assign(&dfeat_b)?;
    let ext_grad = if opts.update_extractor {
        Some(pair.extractor.backward(&ext_tape, &dfeat)?.0)
    } else {
        None
    };

    let trained_loss_a = selection_loss(&losses_a, &mask_b)?;
    let trained_loss_b = selection_loss(&losses_b, &mask_a)?;
    if !(trained_loss_a.is_finite() && trained_loss_b.is_finite()) {
        return Err(Error::NonFinite("selected loss"));
    }

    pair.a_opt.step(pair.a, &grad_a)?;
    pair.b_opt.step(pair.b, &grad_b)?;
    if let Some(g) = ext_grad {
        pair.extractor_opt.step(pair.extractor, &g)?;
    }

    Ok(CheckingOutcome {
        mask_a,
        mask_b,
        losses_a,
        losses_b,
        trained_loss_a,
        trained_loss_b,
        penalty_value,
    })
}
