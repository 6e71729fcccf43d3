//! Flat `key = value` experiment configs.
//!
//! ```text
//! # blobs, heavy symmetric noise
//! data.kind = blobs
//! noise.kind = symmetry
//! noise.rho = 0.45
//! butterfly.T_max = 30
//! experiment.variants = bnet, no-check
//! ```
//!
//! Every key has a default; unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::butterfly::{ButterflyVariant, EvalHead, ModelConfig, RegularizerNorm, TrainConfig};
use crate::datasets::BlobConfig;
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::noise::{NoiseKind, NoiseSpec};

/// A training procedure a grid cell can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Butterfly(ButterflyVariant),
    /// Co-teaching on the source, relabel, then adapt without checks.
    TwoStep,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "two-step" => Ok(Self::TwoStep),
            other => other
                .parse()
                .map(Self::Butterfly)
                .map_err(|e| format!("{e}, or two-step")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Butterfly(v) => v.fmt(f),
            Self::TwoStep => f.write_str("two-step"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Blobs(BlobConfig),
    /// One IDX image/label pair split into source and a rotated target.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        n_source: usize,
        n_target: usize,
        rotation: f64,
    },
    /// Separate feature tables for source and target.
    Csv {
        source: PathBuf,
        target: PathBuf,
        label_column: usize,
        header: bool,
    },
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub data: DataSpec,
    pub noise: NoiseSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_head: EvalHead,
    pub seed: u64,
    pub seeds: usize,
    pub methods: Vec<Method>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            data: DataSpec::Blobs(BlobConfig {
                classes: 4,
                dim: 10,
                n_source: 4000,
                n_target: 2000,
                rotation: std::f64::consts::FRAC_PI_6,
                translation: Vec::new(),
            }),
            noise: NoiseSpec {
                kind: NoiseKind::Symmetry,
                rho: 0.45,
                seed: 0,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval_head: EvalHead::Average,
            seed: 0,
            seeds: 1,
            methods: vec![Method::Butterfly(ButterflyVariant::BNET)],
            output: None,
        }
    }
}

const COMMON_KEYS: &[&str] = &[
    "seed",
    "data.kind",
    "noise.kind",
    "noise.rho",
    "noise.seed",
    "model.extractor_hidden",
    "model.head_hidden",
    "model.dropout",
    "model.batchnorm",
    "optim.kind",
    "optim.lr",
    "optim.momentum",
    "butterfly.tau",
    "butterfly.tau_t",
    "butterfly.T_k",
    "butterfly.T_max",
    "butterfly.N_max",
    "butterfly.penalty",
    "butterfly.reg_norm",
    "butterfly.confidence",
    "butterfly.n_t_max",
    "butterfly.n_init",
    "butterfly.batch",
    "butterfly.target_batch",
    "butterfly.freeze_extractor",
    "butterfly.variant",
    "eval.head",
    "experiment.seeds",
    "experiment.variants",
    "experiment.output",
];

const BLOB_KEYS: &[&str] = &[
    "data.classes",
    "data.dim",
    "data.n_source",
    "data.n_target",
    "data.rotation",
    "data.translation",
];
const IDX_KEYS: &[&str] = &["data.images", "data.labels", "data.n_source", "data.n_target", "data.rotation"];
const CSV_KEYS: &[&str] = &["data.source", "data.target", "data.label_column", "data.header"];

struct Entry {
    line: usize,
    value: String,
}

struct Raw {
    entries: BTreeMap<String, Entry>,
    order: Vec<String>,
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut order = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| config_err(body, format!("line {line_no}: expected `key = value`")))?;
            let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
            if k.is_empty() {
                return Err(config_err("", format!("line {line_no}: empty key")));
            }
            if let Some(prev) = entries.get(&k) {
                let prev: &Entry = prev;
                return Err(config_err(&k, format!("line {line_no}: already set on line {}", prev.line)));
            }
            order.push(k.clone());
            entries.insert(k, Entry { line: line_no, value: v });
        }
        Ok(Self { entries, order })
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.str(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    let line = self.entries[key].line;
                    config_err(key, format!("line {line}: cannot parse `{v}`: {e}"))
                })
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.str(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| config_err(key, format!("cannot parse `{s}`: {e}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.str(key).ok_or_else(|| config_err(key, "required for this data.kind"))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(key, format!("expected true/false, got `{v}`"))),
    }
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    /// Parses config text. Relative data paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let raw = Raw::parse(text)?;
        let kind = raw.str("data.kind").unwrap_or("blobs");
        let data_keys = match kind {
            "blobs" => BLOB_KEYS,
            "idx" => IDX_KEYS,
            "csv" => CSV_KEYS,
            other => return Err(config_err("data.kind", format!("unknown kind `{other}` (blobs, idx, csv)"))),
        };
        if let Some(bad) = raw
            .order
            .iter()
            .find(|k| !COMMON_KEYS.contains(&k.as_str()) && !data_keys.contains(&k.as_str()))
        {
            let line = raw.entries[bad].line;
            let reason = if bad.starts_with("data.") {
                format!("line {line}: not used by data.kind = {kind}")
            } else {
                format!("line {line}: unknown key")
            };
            return Err(config_err(bad, reason));
        }

        let mut spec = ExperimentSpec::default();
        let resolve = |p: &str| match base {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        };
        spec.data = match kind {
            "blobs" => {
                let DataSpec::Blobs(d) = &spec.data else { unreachable!() };
                DataSpec::Blobs(BlobConfig {
                    classes: raw.or("data.classes", d.classes)?,
                    dim: raw.or("data.dim", d.dim)?,
                    n_source: raw.or("data.n_source", d.n_source)?,
                    n_target: raw.or("data.n_target", d.n_target)?,
                    rotation: raw.or("data.rotation", d.rotation)?,
                    translation: raw.list("data.translation")?.unwrap_or_default(),
                })
            }
            "idx" => DataSpec::Idx {
                images: resolve(raw.required("data.images")?),
                labels: resolve(raw.required("data.labels")?),
                n_source: raw.or("data.n_source", 10_000)?,
                n_target: raw.or("data.n_target", 5_000)?,
                rotation: raw.or("data.rotation", std::f64::consts::FRAC_PI_4)?,
            },
            _ => DataSpec::Csv {
                source: resolve(raw.required("data.source")?),
                target: resolve(raw.required("data.target")?),
                label_column: raw.or("data.label_column", 0)?,
                header: raw.str("data.header").map_or(Ok(false), |v| parse_bool("data.header", v))?,
            },
        };

        spec.seed = raw.or("seed", 0)?;
        spec.noise = NoiseSpec {
            kind: raw.or("noise.kind", spec.noise.kind)?,
            rho: raw.or("noise.rho", spec.noise.rho)?,
            seed: raw.or("noise.seed", spec.seed)?,
        };

        let m = &mut spec.model;
        if let Some(h) = raw.list("model.extractor_hidden")? {
            m.extractor_hidden = h;
        }
        if let Some(h) = raw.list("model.head_hidden")? {
            m.head_hidden = h;
        }
        m.dropout = raw.or("model.dropout", m.dropout)?;
        if let Some(v) = raw.str("model.batchnorm") {
            m.batchnorm = parse_bool("model.batchnorm", v)?;
        }
        m.learning_rate = raw.or("optim.lr", m.learning_rate)?;
        let momentum = raw.or("optim.momentum", 0.9)?;
        m.optimizer = match raw.str("optim.kind").unwrap_or("momentum") {
            "momentum" | "sgd" => OptimizerKind::MomentumSgd { momentum },
            "adagrad" => {
                if raw.str("optim.momentum").is_some() {
                    return Err(config_err("optim.momentum", "not used by adagrad"));
                }
                OptimizerKind::Adagrad
            }
            other => return Err(config_err("optim.kind", format!("unknown optimizer `{other}` (momentum, adagrad)"))),
        };

        let t = &mut spec.train;
        t.schedule.tau = raw.or("butterfly.tau", t.schedule.tau)?;
        t.schedule.tau_t = raw.or("butterfly.tau_t", t.schedule.tau_t)?;
        t.schedule.warmup_epochs = raw.or("butterfly.T_k", t.schedule.warmup_epochs)?;
        t.schedule.max_epochs = raw.or("butterfly.T_max", t.schedule.max_epochs)?;
        t.iterations_per_epoch = raw.or("butterfly.N_max", t.iterations_per_epoch)?;
        t.penalty = raw.or("butterfly.penalty", t.penalty)?;
        t.regularizer_norm = match raw.str("butterfly.reg_norm").unwrap_or("abs") {
            "abs" => RegularizerNorm::AbsSum,
            "frobenius" => RegularizerNorm::Frobenius,
            other => return Err(config_err("butterfly.reg_norm", format!("unknown norm `{other}` (abs, frobenius)"))),
        };
        t.policy.confidence_threshold = raw.or("butterfly.confidence", t.policy.confidence_threshold)?;
        t.policy.n_t_max = raw.or("butterfly.n_t_max", t.policy.n_t_max)?;
        t.policy.n_init = raw.get("butterfly.n_init")?;
        t.batch_size = raw.or("butterfly.batch", t.batch_size)?;
        t.target_batch_size = raw.or("butterfly.target_batch", t.batch_size)?;
        if let Some(v) = raw.str("butterfly.freeze_extractor") {
            t.freeze_extractor_in_branch2 = parse_bool("butterfly.freeze_extractor", v)?;
        }

        spec.eval_head = match raw.str("eval.head").unwrap_or("average") {
            "average" => EvalHead::Average,
            "first" => EvalHead::First,
            other => return Err(config_err("eval.head", format!("unknown head `{other}` (average, first)"))),
        };

        spec.seeds = raw.or("experiment.seeds", 1)?;
        match (raw.list::<Method>("experiment.variants")?, raw.get::<Method>("butterfly.variant")?) {
            (Some(_), Some(_)) => {
                return Err(config_err("butterfly.variant", "conflicts with experiment.variants"));
            }
            (Some(list), None) => spec.methods = list,
            (None, Some(one)) => spec.methods = vec![one],
            (None, None) => {}
        }
        spec.output = raw.str("experiment.output").map(PathBuf::from);
        spec.validate()?;
        Ok(spec)
    }

    /// Checks value ranges, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(config_err("experiment.seeds", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("experiment.variants", "empty list"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return Err(config_err("experiment.variants", format!("`{dup}` listed twice")));
        }
        if !(0.0..1.0).contains(&self.noise.rho) {
            return Err(config_err("noise.rho", format!("{} outside [0, 1)", self.noise.rho)));
        }
        if self.noise.kind == NoiseKind::Pair && self.noise.rho >= 0.5 {
            return Err(config_err("noise.rho", "pair flipping needs rho < 0.5"));
        }
        let s = &self.train.schedule;
        for (key, v) in [("butterfly.tau", s.tau), ("butterfly.tau_t", s.tau_t)] {
            if !(0.0..1.0).contains(&v) {
                return Err(config_err(key, format!("{v} outside [0, 1)")));
            }
        }
        if s.warmup_epochs == 0 {
            return Err(config_err("butterfly.T_k", "must be at least 1"));
        }
        if s.max_epochs < s.warmup_epochs {
            return Err(config_err("butterfly.T_max", "must be at least butterfly.T_k"));
        }
        if self.train.iterations_per_epoch == 0 {
            return Err(config_err("butterfly.N_max", "must be at least 1"));
        }
        if self.train.batch_size < 2 {
            return Err(config_err("butterfly.batch", "must be at least 2"));
        }
        if self.train.target_batch_size < 2 {
            return Err(config_err("butterfly.target_batch", "must be at least 2"));
        }
        if !(self.train.penalty >= 0.0 && self.train.penalty.is_finite()) {
            return Err(config_err("butterfly.penalty", "must be a non-negative number"));
        }
        let c = self.train.policy.confidence_threshold;
        if !(c > 0.5 && c <= 1.0) {
            return Err(config_err("butterfly.confidence", format!("{c} outside (0.5, 1]")));
        }
        if !(self.model.learning_rate > 0.0 && self.model.learning_rate.is_finite()) {
            return Err(config_err("optim.lr", "must be positive"));
        }
        if let OptimizerKind::MomentumSgd { momentum } = self.model.optimizer {
            if !(0.0..1.0).contains(&momentum) {
                return Err(config_err("optim.momentum", format!("{momentum} outside [0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(config_err("model.dropout", format!("{} outside [0, 1)", self.model.dropout)));
        }
        if self.model.extractor_hidden.is_empty() || self.model.extractor_hidden.contains(&0) {
            return Err(config_err("model.extractor_hidden", "need at least one non-zero width"));
        }
        if self.model.head_hidden.contains(&0) {
            return Err(config_err("model.head_hidden", "zero width"));
        }
        if let DataSpec::Blobs(b) = &self.data {
            if b.classes < 2 {
                return Err(config_err("data.classes", "need at least 2"));
            }
            if b.dim < 2 {
                return Err(config_err("data.dim", "need at least 2"));
            }
            if b.n_source == 0 || b.n_target == 0 {
                return Err(config_err("data.n_source", "both domains need samples"));
            }
            if b.translation.len() > b.dim {
                return Err(config_err("data.translation", "longer than data.dim"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_config_gives_defaults() {
        let s = ExperimentSpec::parse("", None).unwrap();
        assert_eq!(s, ExperimentSpec::default());
        let t = &s.train;
        assert_eq!((t.schedule.warmup_epochs, t.schedule.max_epochs), (5, 30));
        assert_eq!((t.schedule.tau, t.schedule.tau_t), (0.4, 0.05));
        assert_eq!((t.policy.confidence_threshold, t.penalty), (0.95, 0.01));
        assert_eq!((t.batch_size, t.iterations_per_epoch), (128, 50));
        assert_eq!(s.model.learning_rate, 0.01);
    }

    #[test]
    fn typo_is_named() {
        let e = ExperimentSpec::parse("buterfly.tau = 0.3\n", None).unwrap_err();
        assert_eq!(key_of(e), "buterfly.tau");
    }

    #[test]
    fn data_keys_depend_on_kind() {
        let e = ExperimentSpec::parse("data.kind = csv\ndata.source=a\ndata.target=b\ndata.dim = 3", None).unwrap_err();
        assert_eq!(key_of(e), "data.dim");
        let e = ExperimentSpec::parse("data.kind = idx\ndata.images = a", None).unwrap_err();
        assert_eq!(key_of(e), "data.labels");
    }

    #[test]
    fn values_and_lists_parse() {
        let text = "\
# comment
seed = 7
noise.kind = pair   # trailing comment
noise.rho = 0.3
butterfly.T_max = 12
experiment.variants = bnet, no-check, two-step
model.extractor_hidden = 16,8
optim.kind = adagrad
";
        let s = ExperimentSpec::parse(text, None).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.noise.seed, 7);
        assert_eq!(s.noise.kind, NoiseKind::Pair);
        assert_eq!(s.train.schedule.max_epochs, 12);
        assert_eq!(
            s.methods,
            vec![
                Method::Butterfly(ButterflyVariant::BNET),
                Method::Butterfly(ButterflyVariant::NO_CHECK),
                Method::TwoStep
            ]
        );
        assert_eq!(s.model.extractor_hidden, vec![16, 8]);
        assert_eq!(s.model.optimizer, OptimizerKind::Adagrad);
    }

    #[test]
    fn bad_values_name_their_key() {
        for (text, key) in [
            ("noise.rho = abc", "noise.rho"),
            ("noise.kind = pair\nnoise.rho = 0.5", "noise.rho"),
            ("butterfly.batch = 1", "butterfly.batch"),
            ("butterfly.confidence = 0.4", "butterfly.confidence"),
            ("experiment.variants = bnet, bnet", "experiment.variants"),
            ("experiment.variants = bnet-q", "experiment.variants"),
            ("seed = 1\nseed = 2", "seed"),
            ("just words", "just words"),
        ] {
            assert_eq!(key_of(ExperimentSpec::parse(text, None).unwrap_err()), key, "{text}");
        }
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let s = ExperimentSpec::parse("data.kind = csv\ndata.source = s.csv\ndata.target = /t.csv", Some(Path::new("/cfg")))
            .unwrap();
        let DataSpec::Csv { source, target, .. } = s.data else { panic!() };
        assert_eq!(source, PathBuf::from("/cfg/s.csv"));
        assert_eq!(target, PathBuf::from("/t.csv"));
    }
}
