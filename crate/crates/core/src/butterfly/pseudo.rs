use rand::seq::index::sample;
use rand::Rng;

use super::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::nn::matrix::argmax;
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelPolicy {
    /// At least one of the two heads must reach this probability.
    pub confidence_threshold: f64,
    /// Quota used by the first labeling round; `None` uses the epoch-1
    /// value of the growth rule.
    pub n_init: Option<usize>,
    /// Cap on the per-epoch quota.
    pub n_t_max: usize,
}

impl Default for PseudoLabelPolicy {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.95,
            n_init: None,
            n_t_max: 15_000,
        }
    }
}

impl PseudoLabelPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.5 && self.confidence_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence threshold {} outside (0.5, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

/// Target points (by index into the target set) with the class both heads
/// agreed on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PseudoLabeled {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
}

impl PseudoLabeled {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Label rule over precomputed head probabilities: the argmaxes agree and
/// at least one head is confident. `candidates[i]` names row `i`.
pub fn label_by_agreement(p1: &Matrix, p2: &Matrix, candidates: &[usize], threshold: f64) -> PseudoLabeled {
    let mut out = PseudoLabeled::default();
    for ((r1, r2), &idx) in p1.iter_rows().zip(p2.iter_rows()).zip(candidates) {
        let (c1, c2) = (argmax(r1), argmax(r2));
        if c1 == c2 && r1[c1].max(r2[c2]) >= threshold {
            out.indices.push(idx);
            out.labels.push(c1);
        }
    }
    out
}

/// Draws `n_quota` target points without replacement and labels those on
/// which F1 and F2 agree with confidence.
pub fn assign_pseudo_labels<R: Rng + ?Sized>(
    bundle: &ModelBundle,
    target_features: &Matrix,
    n_quota: usize,
    policy: &PseudoLabelPolicy,
    rng: &mut R,
) -> Result<PseudoLabeled> {
    let n = target_features.rows();
    let take = n_quota.min(n);
    if take == 0 {
        return Ok(PseudoLabeled::default());
    }
    let mut candidates = sample(rng, n, take).into_vec();
    candidates.sort_unstable();
    let x = target_features.gather_rows(&candidates);
    let (p1, p2) = bundle.branch1_probs(&x)?;
    Ok(label_by_agreement(&p1, &p2, &candidates, policy.confidence_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(class: usize, p: f64, k: usize) -> Vec<f64> {
        let rest = (1.0 - p) / (k - 1) as f64;
        (0..k).map(|j| if j == class { p } else { rest }).collect()
    }

    fn one(a: Vec<f64>, b: Vec<f64>, threshold: f64) -> PseudoLabeled {
        let k = a.len();
        label_by_agreement(
            &Matrix::new(1, k, a).unwrap(),
            &Matrix::new(1, k, b).unwrap(),
            &[42],
            threshold,
        )
    }

    #[test]
    fn one_confident_agreeing_head_suffices() {
        let got = one(probs(3, 0.97, 10), probs(3, 0.60, 10), 0.95);
        assert_eq!(got.indices, vec![42]);
        assert_eq!(got.labels, vec![3]);
    }

    #[test]
    fn disagreement_gives_nothing() {
        assert!(one(probs(3, 0.97, 10), probs(5, 0.99, 10), 0.95).is_empty());
    }

    #[test]
    fn unconfident_agreement_gives_nothing() {
        assert!(one(probs(2, 0.70, 10), probs(2, 0.80, 10), 0.95).is_empty());
    }

    #[test]
    fn threshold_bounds() {
        let bad = PseudoLabelPolicy { confidence_threshold: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(PseudoLabelPolicy::default().validate().is_ok());
    }
}
