use crate::error::{shape_err, Error, Result};

/// Binary vector over a mini-batch marking the samples that feed the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    u: Vec<bool>,
    k: usize,
}

impl SelectionMask {
    pub fn new(u: Vec<bool>) -> Result<Self> {
        let k = u.iter().filter(|&&b| b).count();
        if k == 0 {
            return Err(Error::EmptySelection);
        }
        Ok(Self { u, k })
    }

    pub fn all(n: usize) -> Result<Self> {
        Self::new(vec![true; n])
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Number of selected samples.
    pub fn count(&self) -> usize {
        self.k
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.u.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// `uᵢ / Σu`, the per-sample weights of the masked mean.
    pub fn weights(&self) -> Vec<f64> {
        let w = 1.0 / self.k as f64;
        self.u.iter().map(|&b| if b { w } else { 0.0 }).collect()
    }
}

/// `max(1, ⌈α·n⌉)`
pub fn selection_count(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Masked mean of per-sample losses.
pub fn selection_loss(per_sample: &[f64], mask: &SelectionMask) -> Result<f64> {
    if per_sample.len() != mask.len() {
        return Err(shape_err("selection_loss", mask.len(), per_sample.len()));
    }
    Ok(mask.selected().map(|i| per_sample[i]).sum::<f64>() / mask.count() as f64)
}

/// Keeps the `max(1, ⌈α·n⌉)` smallest losses. Ties go to the lower index.
pub fn small_loss_select(per_sample: &[f64], alpha: f64) -> Result<SelectionMask> {
    small_loss_select_among(per_sample, alpha, None)
}

/// Small-loss selection restricted to `eligible` samples: those compete for
/// `max(1, ⌈α·n_eligible⌉)` slots, everything else is always kept.
pub fn small_loss_select_among(per_sample: &[f64], alpha: f64, eligible: Option<&[bool]>) -> Result<SelectionMask> {
    let n = per_sample.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot select from an empty batch".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("remember rate {alpha} outside (0, 1]")));
    }
    if let Some(e) = eligible {
        if e.len() != n {
            return Err(shape_err("small_loss_select", n, e.len()));
        }
    }
    let is_eligible = |i: usize| eligible.is_none_or(|e| e[i]);

    let mut candidates: Vec<usize> = (0..n).filter(|&i| is_eligible(i)).collect();
    let mut u: Vec<bool> = (0..n).map(|i| !is_eligible(i)).collect();
    if !candidates.is_empty() {
        let k = selection_count(alpha, candidates.len());
        // stable sort keeps index order among equal losses
        candidates.sort_by(|&a, &b| per_sample[a].total_cmp(&per_sample[b]));
        for &i in &candidates[..k] {
            u[i] = true;
        }
    }
    SelectionMask::new(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum masked-mean loss over every mask with exactly `k` entries.
    fn brute_force_min(losses: &[f64], k: usize) -> f64 {
        let n = losses.len();
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| losses[i]).sum::<f64>() / k as f64)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn full_mask_is_plain_mean() {
        let l = [0.5, 1.5, 2.5];
        let m = SelectionMask::all(3).unwrap();
        assert!((selection_loss(&l, &m).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn masked_mean_arithmetic() {
        let m = SelectionMask::new(vec![true, false, true]).unwrap();
        assert_eq!(selection_loss(&[1.0, 3.0, 5.0], &m).unwrap(), 3.0);
        let one = SelectionMask::new(vec![false, true, false]).unwrap();
        assert_eq!(selection_loss(&[1.0, 3.0, 5.0], &one).unwrap(), 3.0);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(SelectionMask::new(vec![false; 3]), Err(Error::EmptySelection)));
    }

    #[test]
    fn picks_two_smallest() {
        let losses = [0.9, 0.1, 0.4, 0.7];
        let m = small_loss_select(&losses, 0.5).unwrap();
        assert_eq!(m.selected().collect::<Vec<_>>(), vec![1, 2]);
        let got = selection_loss(&losses, &m).unwrap();
        assert_eq!(got, brute_force_min(&losses, 2));
    }

    #[test]
    fn alpha_one_keeps_everything() {
        let m = small_loss_select(&[3.0, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(m.count(), 3);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let m = small_loss_select(&[0.2; 6], 0.5).unwrap();
        assert_eq!(m.selected().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn tiny_alpha_keeps_one() {
        let m = small_loss_select(&[0.3, 0.1, 0.2], 0.01).unwrap();
        assert_eq!(m.selected().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(small_loss_select(&[], 0.5).is_err());
    }

    #[test]
    fn ineligible_samples_always_kept() {
        let losses = [5.0, 0.1, 4.0, 0.2, 9.0];
        let eligible = [true, true, true, true, false];
        let m = small_loss_select_among(&losses, 0.5, Some(&eligible)).unwrap();
        assert_eq!(m.selected().collect::<Vec<_>>(), vec![1, 3, 4]);
        let none = small_loss_select_among(&losses, 0.5, Some(&[false; 5])).unwrap();
        assert_eq!(none.count(), 5);
    }

    proptest! {
        #[test]
        fn selection_is_optimal(losses in prop::collection::vec(0.0f64..10.0, 1..=8), alpha in 0.01f64..=1.0) {
            let m = small_loss_select(&losses, alpha).unwrap();
            let k = selection_count(alpha, losses.len());
            prop_assert_eq!(m.count(), k);
            let got = selection_loss(&losses, &m).unwrap();
            prop_assert!((got - brute_force_min(&losses, k)).abs() < 1e-12);
        }
    }
}
