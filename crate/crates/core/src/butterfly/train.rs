//! Quadruple training loop and the two-step baseline.
//!
//! Each epoch runs `iterations_per_epoch` mini-batch rounds. A round fetches
//! a batch from the mixture domain (noisy source plus the current
//! pseudo-labeled target set) and cross-updates F1/F2 on it, then fetches a
//! batch from the target pool and cross-updates Ft1/Ft2. After the rounds,
//! F1 and F2 label a fresh random subset of the target, which becomes the
//! next target pool and is merged with the source into the next mixture.
//! During the first epoch the target pool is the noisy source itself, and a
//! harvest too small to batch leaves the previous pools in place.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bundle::{ModelBundle, ModelConfig};
use super::checking::{checking_step, CheckingOptions, Regularizer, RegularizerNorm};
use super::pseudo::{assign_pseudo_labels, PseudoLabelPolicy, PseudoLabeled};
use super::schedule::{pseudo_quota, remember_rate, Branch, ScheduleParams};
use super::variant::ButterflyVariant;
use crate::datasets::{BatchIterator, LabeledDataset};
use crate::error::{shape_err, Error, Result};
use crate::metrics::{bound_diagnostic, BoundTerms};
use crate::nn::matrix::argmax;
use crate::nn::Matrix;

/// Where a training sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Source(usize),
    Target(usize),
}

/// Labeled samples referenced by origin, with the label training uses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    pub origins: Vec<Origin>,
    pub labels: Vec<usize>,
}

impl Pool {
    pub fn from_source(source: &LabeledDataset) -> Self {
        Self {
            origins: (0..source.len()).map(Origin::Source).collect(),
            labels: source.labels().to_vec(),
        }
    }

    pub fn from_pseudo(p: &PseudoLabeled) -> Self {
        Self {
            origins: p.indices.iter().map(|&i| Origin::Target(i)).collect(),
            labels: p.labels.clone(),
        }
    }

    pub fn merged(mut self, other: &Pool) -> Self {
        self.origins.extend_from_slice(&other.origins);
        self.labels.extend_from_slice(&other.labels);
        self
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn has_target(&self) -> bool {
        self.origins.iter().any(|o| matches!(o, Origin::Target(_)))
    }

    fn gather(&self, idx: &[usize], source: &Matrix, target: &Matrix) -> (Matrix, Vec<usize>) {
        let mut x = Matrix::zeros(idx.len(), source.cols());
        for (r, &i) in idx.iter().enumerate() {
            let row = match self.origins[i] {
                Origin::Source(j) => source.row(j),
                Origin::Target(j) => target.row(j),
            };
            x.row_mut(r).copy_from_slice(row);
        }
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: ScheduleParams,
    pub policy: PseudoLabelPolicy,
    pub variant: ButterflyVariant,
    pub penalty: f64,
    pub regularizer_norm: RegularizerNorm,
    /// Mini-batch rounds per epoch.
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub target_batch_size: usize,
    /// Keep target-branch gradients out of the shared extractor.
    pub freeze_extractor_in_branch2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            policy: PseudoLabelPolicy::default(),
            variant: ButterflyVariant::BNET,
            penalty: 0.01,
            regularizer_norm: RegularizerNorm::AbsSum,
            iterations_per_epoch: 50,
            batch_size: 128,
            target_batch_size: 128,
            freeze_extractor_in_branch2: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.policy.validate()?;
        if self.iterations_per_epoch == 0 {
            return Err(Error::InvalidArgument("iterations per epoch must be positive".into()));
        }
        if self.batch_size < 2 || self.target_batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch sizes must be at least 2, got {} and {}",
                self.batch_size, self.target_batch_size
            )));
        }
        if !(self.penalty.is_finite() && self.penalty >= 0.0) {
            return Err(Error::InvalidArgument(format!("penalty {}", self.penalty)));
        }
        Ok(())
    }

    fn regularizer(&self) -> Option<Regularizer> {
        (self.variant.use_regularizer && self.penalty > 0.0).then_some(Regularizer {
            penalty: self.penalty,
            norm: self.regularizer_norm,
        })
    }
}

/// What the loop knows about one finished epoch, without any oracle input.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub remember_rate: f64,
    pub remember_rate_target: f64,
    pub mixture_size: usize,
    pub target_pool_size: usize,
    /// Size of the pseudo-label harvest at the end of the epoch.
    pub n_pseudo: usize,
    pub mean_selected_loss_branch1: f64,
    pub mean_selected_loss_branch2: f64,
    pub bound: BoundTerms,
}

/// Observer for oracle-side measurement. The training loop reports what it
/// selected and labeled; implementations may compare that with hidden truth.
pub trait Probe {
    /// Samples kept by the mixture-branch selection, with their training labels.
    fn branch1_selected(&mut self, _selected: &[(Origin, usize)]) {}
    /// Samples kept by the target-branch selection, with their training labels.
    fn branch2_selected(&mut self, _selected: &[(Origin, usize)]) {}
    fn pseudo_labeled(&mut self, _labeled: &PseudoLabeled) {}
    /// Source labels produced by the first stage of the two-step baseline.
    fn source_relabeled(&mut self, _labels: &[usize]) {}
    fn end_epoch(&mut self, _summary: &EpochSummary, _bundle: &ModelBundle) -> Result<()> {
        Ok(())
    }
}

/// Probe that records nothing.
#[derive(Debug, Default)]
pub struct NullProbe;

impl Probe for NullProbe {}

/// Noisy labeled source and unlabeled target features.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub source: &'a LabeledDataset,
    pub target: &'a Matrix,
}

impl TrainInputs<'_> {
    fn validate(&self, bundle: &ModelBundle) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::InvalidArgument("source set is empty".into()));
        }
        if self.source.dim() != self.target.cols() {
            return Err(shape_err("train inputs", self.source.dim(), self.target.cols()));
        }
        if bundle.extractor.input_dim() != self.source.dim() {
            return Err(shape_err("bundle input", self.source.dim(), bundle.extractor.input_dim()));
        }
        if bundle.classes() != self.source.classes() {
            return Err(shape_err("bundle classes", self.source.classes(), bundle.classes()));
        }
        Ok(())
    }
}

pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.next_u64()
}

fn selected_pairs(pool: &Pool, idx: &[usize], masks: [&super::SelectionMask; 2]) -> Vec<(Origin, usize)> {
    masks
        .iter()
        .flat_map(|m| m.selected())
        .map(|j| (pool.origins[idx[j]], pool.labels[idx[j]]))
        .collect()
}

fn is_nonfinite(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_))
}

/// Runs the full quadruple training procedure. `bundle` holds the trained
/// networks afterwards; Ft1/Ft2 are the outputs for the target domain.
///
/// If an epoch produces a non-finite loss the bundle is rolled back to the
/// end of the last completed epoch and [`Error::Diverged`] is returned.
pub fn train_butterfly<P: Probe + ?Sized>(
    inputs: TrainInputs<'_>,
    bundle: &mut ModelBundle,
    cfg: &TrainConfig,
    seed: u64,
    probe: &mut P,
) -> Result<Vec<EpochSummary>> {
    cfg.validate()?;
    inputs.validate(bundle)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 1));
    let n_t = inputs.target.rows();
    let source_pool = Pool::from_source(inputs.source);
    let mut target_pool = source_pool.clone();
    let mut mixture = source_pool.clone();
    let mut quota = cfg
        .policy
        .n_init
        .unwrap_or_else(|| pseudo_quota(1, n_t, cfg.policy.n_t_max));

    let mut summaries = Vec::with_capacity(cfg.schedule.max_epochs);
    let mut last_good = (0usize, bundle.clone());
    for epoch in 1..=cfg.schedule.max_epochs {
        let step = run_epoch(
            inputs,
            bundle,
            cfg,
            epoch,
            seed,
            &mut rng,
            &mut label_rng,
            quota,
            &source_pool,
            &mut mixture,
            &mut target_pool,
            probe,
        );
        let summary = match step {
            Ok(s) => s,
            Err(e) if is_nonfinite(&e) => {
                *bundle = last_good.1;
                return Err(Error::Diverged {
                    epoch,
                    last_good: last_good.0,
                });
            }
            Err(e) => return Err(e),
        };
        probe.end_epoch(&summary, bundle)?;
        summaries.push(summary);
        quota = pseudo_quota(epoch, n_t, cfg.policy.n_t_max);
        last_good = (epoch, bundle.clone());
    }
    Ok(summaries)
}

#[allow(clippy::too_many_arguments)]
fn run_epoch<P: Probe + ?Sized>(
    inputs: TrainInputs<'_>,
    bundle: &mut ModelBundle,
    cfg: &TrainConfig,
    epoch: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    label_rng: &mut ChaCha8Rng,
    quota: usize,
    source_pool: &Pool,
    mixture: &mut Pool,
    target_pool: &mut Pool,
    probe: &mut P,
) -> Result<EpochSummary> {
    let variant = cfg.variant;
    let alpha = remember_rate(epoch, &cfg.schedule, Branch::Mixture);
    let alpha_t = remember_rate(epoch, &cfg.schedule, Branch::Target);
    let alpha_mix = if variant.checks_mixture() { alpha } else { 1.0 };
    let alpha_b2 = if variant.check_branch2 { alpha_t } else { 1.0 };
    let regularizer = cfg.regularizer();

    let eligibility: Vec<bool> = mixture
        .origins
        .iter()
        .map(|o| match o {
            Origin::Source(_) => variant.check_source_in_mixture,
            Origin::Target(_) => variant.check_target_in_mixture,
        })
        .collect();
    let all_eligible = eligibility.iter().all(|&e| e);

    let mut mix_iter = BatchIterator::new(mixture.len(), cfg.batch_size, sub_seed(seed, 100 + 2 * epoch as u64));
    let mut tgt_iter = BatchIterator::new(
        target_pool.len(),
        cfg.target_batch_size,
        sub_seed(seed, 101 + 2 * epoch as u64),
    );

    let (src_x, tgt_x) = (inputs.source.features(), inputs.target);
    let mut loss1 = 0.0;
    let mut loss2 = 0.0;
    for _ in 0..cfg.iterations_per_epoch {
        let idx = mix_iter.next_cycling();
        let (x, y) = mixture.gather(&idx, src_x, tgt_x);
        let eligible: Option<Vec<bool>> = (!all_eligible).then(|| idx.iter().map(|&i| eligibility[i]).collect());
        let opts = CheckingOptions {
            alpha: alpha_mix,
            eligible: eligible.as_deref(),
            regularizer,
            update_extractor: true,
        };
        let out = checking_step(&mut bundle.branch1(), &x, &y, &opts, rng)?;
        loss1 += 0.5 * (out.trained_loss_a + out.trained_loss_b);
        probe.branch1_selected(&selected_pairs(mixture, &idx, [&out.mask_a, &out.mask_b]));

        let idx = tgt_iter.next_cycling();
        let (x, y) = target_pool.gather(&idx, src_x, tgt_x);
        let opts = CheckingOptions {
            alpha: alpha_b2,
            eligible: None,
            regularizer: None,
            update_extractor: !cfg.freeze_extractor_in_branch2,
        };
        let out = checking_step(&mut bundle.branch2(), &x, &y, &opts, rng)?;
        loss2 += 0.5 * (out.trained_loss_a + out.trained_loss_b);
        probe.branch2_selected(&selected_pairs(target_pool, &idx, [&out.mask_a, &out.mask_b]));
    }

    let harvest = assign_pseudo_labels(bundle, inputs.target, quota, &cfg.policy, label_rng)?;
    probe.pseudo_labeled(&harvest);
    // a single pseudo-labeled point cannot form a training batch; keep the
    // previous pools as for an empty harvest
    if harvest.len() >= 2 {
        *target_pool = Pool::from_pseudo(&harvest);
        *mixture = source_pool.clone().merged(target_pool);
    }

    let pseudo_set = target_pool.has_target().then(|| {
        let idx: Vec<usize> = (0..target_pool.len()).collect();
        target_pool.gather(&idx, src_x, tgt_x)
    });
    let bound = bound_diagnostic(
        bundle,
        inputs.source,
        pseudo_set.as_ref().map(|(x, y)| (x, y.as_slice())),
        alpha,
        alpha_t,
    )?;

    let n = cfg.iterations_per_epoch as f64;
    Ok(EpochSummary {
        epoch,
        remember_rate: alpha,
        remember_rate_target: alpha_t,
        mixture_size: mixture.len(),
        target_pool_size: target_pool.len(),
        n_pseudo: harvest.len(),
        mean_selected_loss_branch1: loss1 / n,
        mean_selected_loss_branch2: loss2 / n,
        bound,
    })
}

/// Co-teaching of F1/F2 (and the extractor) on the noisy source alone.
pub fn co_teach_source(bundle: &mut ModelBundle, source: &LabeledDataset, cfg: &TrainConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for epoch in 1..=cfg.schedule.max_epochs {
        let alpha = remember_rate(epoch, &cfg.schedule, Branch::Mixture);
        let mut it = BatchIterator::new(source.len(), cfg.batch_size, sub_seed(seed, 100 + epoch as u64));
        for _ in 0..cfg.iterations_per_epoch {
            let idx = it.next_cycling();
            let x = source.features().gather_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| source.labels()[i]).collect();
            checking_step(&mut bundle.branch1(), &x, &y, &CheckingOptions::plain(alpha), &mut rng)?;
        }
    }
    Ok(())
}

/// Argmax of the averaged F1/F2 softmax.
pub fn relabel_with_branch1(bundle: &ModelBundle, features: &Matrix) -> Result<Vec<usize>> {
    let (p1, p2) = bundle.branch1_probs(features)?;
    Ok(p1
        .iter_rows()
        .zip(p2.iter_rows())
        .map(|(a, b)| {
            let avg: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            argmax(&avg)
        })
        .collect())
}

pub struct TwoStepOutcome {
    pub bundle: ModelBundle,
    pub relabeled: Vec<usize>,
    pub epochs: Vec<EpochSummary>,
}

/// Denoise first, adapt second: co-teach on the noisy source, relabel the
/// source with the result, then run the adaptation loop with every check
/// off on the relabeled source.
pub fn train_two_step<P: Probe + ?Sized>(
    inputs: TrainInputs<'_>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    probe: &mut P,
) -> Result<TwoStepOutcome> {
    cfg.validate()?;
    let (d, k) = (inputs.source.dim(), inputs.source.classes());
    let mut denoiser = ModelBundle::new(d, k, model, sub_seed(seed, 10))?;
    inputs.validate(&denoiser)?;
    co_teach_source(&mut denoiser, inputs.source, cfg, sub_seed(seed, 11))?;
    let relabeled = relabel_with_branch1(&denoiser, inputs.source.features())?;
    probe.source_relabeled(&relabeled);

    let clean_guess = LabeledDataset::new(inputs.source.features().clone(), relabeled.clone(), k)?;
    let mut bundle = ModelBundle::new(d, k, model, sub_seed(seed, 12))?;
    let adapt_cfg = TrainConfig {
        variant: ButterflyVariant::NO_CHECK,
        ..cfg.clone()
    };
    let epochs = train_butterfly(
        TrainInputs {
            source: &clean_guess,
            target: inputs.target,
        },
        &mut bundle,
        &adapt_cfg,
        sub_seed(seed, 13),
        probe,
    )?;
    Ok(TwoStepOutcome {
        bundle,
        relabeled,
        epochs,
    })
}
