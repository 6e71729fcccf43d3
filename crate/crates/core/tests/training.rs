mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wuda::butterfly::{
    co_teach_source, selection_count, train_butterfly, train_two_step, ButterflyVariant, EpochSummary, EvalHead,
    ModelBundle, ModelConfig, NullProbe, Origin, Probe, ScheduleParams, TrainConfig, TrainInputs,
};
use wuda::datasets::{make_blob_pair, BlobConfig, DomainPair};
use wuda::metrics::{accuracy_from_probs, OracleProbe, RunLog};
use wuda::noise::{corrupt, NoisyDataset, TransitionMatrix};
use wuda::{Error, Result};

fn blobs(n_source: usize, n_target: usize, rotation: f64, seed: u64) -> DomainPair {
    let cfg = BlobConfig {
        classes: 4,
        dim: 10,
        n_source,
        n_target,
        rotation,
        translation: vec![],
    };
    make_blob_pair(&cfg, seed).unwrap()
}

fn noisy(pair: &DomainPair, rho: f64, seed: u64) -> NoisyDataset {
    let q = TransitionMatrix::symmetry(4, rho).unwrap();
    corrupt(&pair.source, &q, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_cfg(variant: ButterflyVariant, epochs: usize) -> TrainConfig {
    TrainConfig {
        variant,
        schedule: ScheduleParams {
            max_epochs: epochs,
            ..ScheduleParams::default()
        },
        iterations_per_epoch: 20,
        batch_size: 64,
        target_batch_size: 64,
        ..TrainConfig::default()
    }
}

fn train(pair: &DomainPair, data: &NoisyDataset, cfg: &TrainConfig, seed: u64) -> Result<(RunLog, ModelBundle)> {
    let mut bundle = ModelBundle::new(10, 4, &ModelConfig::default(), seed)?;
    let mut probe = OracleProbe::new(&data.oracle().clean_labels, pair.target_oracle(), EvalHead::Average);
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    train_butterfly(inputs, &mut bundle, cfg, seed, &mut probe)?;
    Ok((probe.into_log(), bundle))
}

#[test]
fn same_seed_same_log() {
    let pair = blobs(600, 300, 0.5, 1);
    let data = noisy(&pair, 0.3, 2);
    let cfg = small_cfg(ButterflyVariant::BNET, 8);
    let (a, _) = train(&pair, &data, &cfg, 5).unwrap();
    let (b, _) = train(&pair, &data, &cfg, 5).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    let (c, _) = train(&pair, &data, &cfg, 6).unwrap();
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}

#[test]
fn clean_unshifted_run_matches_supervised_training() {
    let pair = blobs(2000, 1000, 0.0, 3);
    let data = noisy(&pair, 0.0, 4);
    let cfg = TrainConfig {
        iterations_per_epoch: 30,
        ..small_cfg(ButterflyVariant::BNET, 10)
    };
    let (log, _) = train(&pair, &data, &cfg, 7).unwrap();
    let ours = log.summary().unwrap().final_accuracy;

    let supervised_cfg = TrainConfig {
        schedule: ScheduleParams {
            tau: 0.0,
            ..cfg.schedule
        },
        ..cfg.clone()
    };
    let mut sup = ModelBundle::new(10, 4, &ModelConfig::default(), 7).unwrap();
    co_teach_source(&mut sup, &pair.source, &supervised_cfg, 7).unwrap();
    let (p1, p2) = sup.branch1_probs(pair.target_features()).unwrap();
    let reference = accuracy_from_probs(&wuda::butterfly::average_probs(&p1, &p2), pair.target_oracle().labels()).unwrap();
    assert!((ours - reference).abs() <= 0.02, "butterfly {ours} vs supervised {reference}");
}

#[test]
fn zero_quota_without_checks_never_pseudo_labels() {
    let pair = blobs(400, 200, 0.5, 5);
    let data = noisy(&pair, 0.2, 6);
    let mut cfg = small_cfg(ButterflyVariant::NO_CHECK, 6);
    cfg.penalty = 0.0;
    cfg.policy.n_t_max = 0;
    let (log, _) = train(&pair, &data, &cfg, 1).unwrap();
    assert!(log.records.iter().all(|r| r.n_pseudo == 0 && r.rho01_t.is_none()));
    // every source sample is kept, so the selected noise is the injected noise
    let injected = data.oracle().corrupted_fraction();
    for r in &log.records {
        assert!((r.rho01_s.unwrap() - injected).abs() < 0.05);
    }
}

#[test]
fn unreachable_confidence_keeps_the_bootstrap_pool() {
    let pair = blobs(400, 200, 0.5, 5);
    let data = noisy(&pair, 0.2, 6);
    let mut cfg = small_cfg(ButterflyVariant::BNET, 6);
    cfg.policy.confidence_threshold = 1.0;
    let mut bundle = ModelBundle::new(10, 4, &ModelConfig::default(), 2).unwrap();
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    let epochs = train_butterfly(inputs, &mut bundle, &cfg, 2, &mut NullProbe).unwrap();
    for e in &epochs {
        assert_eq!((e.n_pseudo, e.target_pool_size, e.mixture_size), (0, 400, 400));
    }
}

#[test]
fn divergence_restores_last_good_epoch() {
    let pair = blobs(200, 100, 0.5, 8);
    let data = noisy(&pair, 0.2, 9);
    let model = ModelConfig {
        learning_rate: 1e200,
        ..ModelConfig::default()
    };
    let mut bundle = ModelBundle::new(10, 4, &model, 3).unwrap();
    let before = bundle.clone();
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    let err = train_butterfly(inputs, &mut bundle, &small_cfg(ButterflyVariant::BNET, 6), 3, &mut NullProbe).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 1, last_good: 0 }), "{err}");
    assert_eq!(bundle.f1.layers()[0].weights, before.f1.layers()[0].weights);
}

#[test]
fn invalid_configs_fail_before_training() {
    let pair = blobs(200, 100, 0.5, 8);
    let data = noisy(&pair, 0.2, 9);
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    let mut bundle = ModelBundle::new(10, 4, &ModelConfig::default(), 3).unwrap();
    let mut bad = small_cfg(ButterflyVariant::BNET, 6);
    bad.batch_size = 1;
    assert!(train_butterfly(inputs, &mut bundle, &bad, 0, &mut NullProbe).is_err());
    let mut bad = small_cfg(ButterflyVariant::BNET, 6);
    bad.schedule.max_epochs = 0;
    assert!(train_butterfly(inputs, &mut bundle, &bad, 0, &mut NullProbe).is_err());
    let mut wrong_dim = ModelBundle::new(3, 4, &ModelConfig::default(), 3).unwrap();
    assert!(train_butterfly(inputs, &mut wrong_dim, &small_cfg(ButterflyVariant::BNET, 6), 0, &mut NullProbe).is_err());
}

/// Counts what the mixture branch selects per step and compares with the rate.
struct CardinalityProbe {
    batch: usize,
    sizes: Vec<usize>,
    checked_epochs: usize,
}

impl Probe for CardinalityProbe {
    fn branch1_selected(&mut self, selected: &[(Origin, usize)]) {
        self.sizes.push(selected.len());
    }

    fn end_epoch(&mut self, summary: &EpochSummary, _: &ModelBundle) -> Result<()> {
        let k = selection_count(summary.remember_rate, self.batch);
        assert!(self.sizes.iter().all(|&s| s == 2 * k), "epoch {}: {:?} vs 2x{k}", summary.epoch, self.sizes);
        self.sizes.clear();
        self.checked_epochs += 1;
        Ok(())
    }
}

#[test]
fn every_step_keeps_the_scheduled_count() {
    let pair = blobs(300, 200, 0.5, 10);
    let data = noisy(&pair, 0.3, 11);
    let cfg = small_cfg(ButterflyVariant::BNET, 8);
    let mut probe = CardinalityProbe {
        batch: cfg.batch_size,
        sizes: vec![],
        checked_epochs: 0,
    };
    let mut bundle = ModelBundle::new(10, 4, &ModelConfig::default(), 4).unwrap();
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    train_butterfly(inputs, &mut bundle, &cfg, 4, &mut probe).unwrap();
    assert_eq!(probe.checked_epochs, 8);
}

#[test]
fn selection_precision_rises_under_heavy_noise() {
    for seed in 0..3 {
        let pair = blobs(2000, 1000, std::f64::consts::FRAC_PI_6, 20 + seed);
        let data = noisy(&pair, 0.45, 30 + seed);
        let (log, _) = train(&pair, &data, &small_cfg(ButterflyVariant::BNET, 15), seed).unwrap();
        let first = log.records[0].branch1_clean_fraction.unwrap();
        let last = log.records.last().unwrap().branch1_clean_fraction.unwrap();
        assert!(last > first, "seed {seed}: clean fraction {first} -> {last}");
    }
}

#[test]
fn two_step_relabels_better_than_the_noise() {
    let pair = blobs(2000, 1000, std::f64::consts::FRAC_PI_6, 40);
    let data = noisy(&pair, 0.2, 41);
    let inputs = TrainInputs {
        source: data.observed(),
        target: pair.target_features(),
    };
    let cfg = small_cfg(ButterflyVariant::BNET, 8);
    let run = |seed| {
        let mut probe = OracleProbe::new(&data.oracle().clean_labels, pair.target_oracle(), EvalHead::Average);
        train_two_step(inputs, &ModelConfig::default(), &cfg, seed, &mut probe).unwrap();
        probe.into_log()
    };
    let log = run(3);
    let relabel = log.relabel_accuracy.unwrap();
    assert!(relabel > 0.8, "relabel accuracy {relabel}");
    assert_eq!(log.records.len(), 8);
    assert_eq!(log, run(3));
}

#[test]
fn frozen_extractor_variant_trains() {
    let pair = blobs(400, 200, 0.5, 12);
    let data = noisy(&pair, 0.2, 13);
    let cfg = TrainConfig {
        freeze_extractor_in_branch2: true,
        ..small_cfg(ButterflyVariant::BNET, 6)
    };
    let (log, _) = train(&pair, &data, &cfg, 1).unwrap();
    assert!(log.summary().unwrap().final_accuracy > 0.5);
}
