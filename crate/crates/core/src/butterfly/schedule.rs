use crate::error::{Error, Result};

/// Remember-rate schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    /// Assumed noise rate of the mixture domain.
    pub tau: f64,
    /// Assumed noise rate of the pseudo-labeled target data.
    pub tau_t: f64,
    /// Epochs over which the discard fraction ramps up.
    pub warmup_epochs: usize,
    pub max_epochs: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            tau: 0.4,
            tau_t: 0.05,
            warmup_epochs: 5,
            max_epochs: 30,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) || !(0.0..1.0).contains(&self.tau_t) {
            return Err(Error::InvalidArgument(format!(
                "tau {} and tau_t {} must lie in [0, 1)",
                self.tau, self.tau_t
            )));
        }
        if self.warmup_epochs < 1 || self.max_epochs < self.warmup_epochs {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= T_k <= T_max, got T_k = {} and T_max = {}",
                self.warmup_epochs, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Branch-I, trained on the mixture domain.
    Mixture,
    /// Branch-II, trained on pseudo-labeled target data.
    Target,
}

/// `1 − min(T/T_k · τ, τ)`, with `τ_t` for the target branch.
pub fn remember_rate(epoch: usize, params: &ScheduleParams, branch: Branch) -> f64 {
    let tau = match branch {
        Branch::Mixture => params.tau,
        Branch::Target => params.tau_t,
    };
    let ramp = epoch as f64 / params.warmup_epochs as f64 * tau;
    1.0 - ramp.min(tau)
}

/// `min(⌊T/20 · n_t⌋, n_t_max)`
pub fn pseudo_quota(epoch: usize, n_target: usize, n_t_max: usize) -> usize {
    (epoch * n_target / 20).min(n_t_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_and_plateau() {
        let p = ScheduleParams::default();
        assert!((remember_rate(2, &p, Branch::Mixture) - 0.84).abs() < 1e-15);
        for t in 5..40 {
            assert_eq!(remember_rate(t, &p, Branch::Mixture), 1.0 - 0.4);
        }
    }

    #[test]
    fn no_noise_keeps_all() {
        let p = ScheduleParams { tau: 0.0, ..Default::default() };
        assert!((1..=30).all(|t| remember_rate(t, &p, Branch::Mixture) == 1.0));
    }

    #[test]
    fn quota_examples() {
        assert_eq!(pseudo_quota(4, 10_000, 15_000), 2_000);
        assert_eq!(pseudo_quota(40, 10_000, 15_000), 15_000);
        assert_eq!(pseudo_quota(7, 10_000, 0), 0);
    }

    #[test]
    fn quota_is_monotone_and_capped() {
        for cap in [0, 50, 900, 5_000] {
            let mut prev = 0;
            for t in 1..=80 {
                let q = pseudo_quota(t, 1_234, cap);
                assert!(q >= prev && q <= cap);
                prev = q;
            }
        }
    }

    #[test]
    fn invalid_params() {
        let bad = ScheduleParams { warmup_epochs: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ScheduleParams { max_epochs: 3, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
