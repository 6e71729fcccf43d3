use std::fmt;
use std::str::FromStr;

/// Which checks are active. The full method turns everything on; the
/// ablations switch parts off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ButterflyVariant {
    /// Source-origin samples in mixture batches may be discarded.
    pub check_source_in_mixture: bool,
    /// Pseudo-labeled target samples in mixture batches may be discarded.
    pub check_target_in_mixture: bool,
    /// The target branch applies small-loss selection.
    pub check_branch2: bool,
    /// Weight-product penalty between F1 and F2.
    pub use_regularizer: bool,
}

impl ButterflyVariant {
    pub const BNET: Self = Self::new(true, true, true, true);
    pub const BNET_S: Self = Self::new(true, false, false, true);
    pub const BNET_T: Self = Self::new(false, false, true, true);
    pub const BNET_ST: Self = Self::new(true, false, true, true);
    pub const BNET_M: Self = Self::new(true, true, false, true);
    pub const WITHOUT_CONSTRAINT: Self = Self::new(true, true, true, false);
    pub const NO_CHECK: Self = Self::new(false, false, false, true);

    pub const PRESETS: [(&'static str, Self); 7] = [
        ("bnet", Self::BNET),
        ("bnet-s", Self::BNET_S),
        ("bnet-t", Self::BNET_T),
        ("bnet-st", Self::BNET_ST),
        ("bnet-m", Self::BNET_M),
        ("b-wo-c", Self::WITHOUT_CONSTRAINT),
        ("no-check", Self::NO_CHECK),
    ];

    pub const fn new(src_mix: bool, tgt_mix: bool, branch2: bool, reg: bool) -> Self {
        Self {
            check_source_in_mixture: src_mix,
            check_target_in_mixture: tgt_mix,
            check_branch2: branch2,
            use_regularizer: reg,
        }
    }

    pub fn checks_mixture(&self) -> bool {
        self.check_source_in_mixture || self.check_target_in_mixture
    }

    pub fn preset_name(&self) -> Option<&'static str> {
        Self::PRESETS.iter().find(|(_, v)| v == self).map(|(n, _)| *n)
    }
}

impl Default for ButterflyVariant {
    fn default() -> Self {
        Self::BNET
    }
}

impl FromStr for ButterflyVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_ascii_lowercase();
        Self::PRESETS
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<_> = Self::PRESETS.iter().map(|(n, _)| *n).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}

impl fmt::Display for ButterflyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(n) => f.write_str(n),
            None => write!(
                f,
                "custom(src={},tgt={},b2={},reg={})",
                self.check_source_in_mixture, self.check_target_in_mixture, self.check_branch2, self.use_regularizer
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_names() {
        for (name, v) in ButterflyVariant::PRESETS {
            assert_eq!(name.parse::<ButterflyVariant>().unwrap(), v);
            assert_eq!(v.to_string(), name);
        }
        assert!("bnet-x".parse::<ButterflyVariant>().is_err());
    }

    #[test]
    fn full_method_checks_everything() {
        let v = ButterflyVariant::BNET;
        assert!(v.check_source_in_mixture && v.check_target_in_mixture && v.check_branch2 && v.use_regularizer);
    }
}
