//! Grid execution: every (seed, method) cell trains on its own data draw and
//! writes its artifacts under `<out>/<method>/seed<i>/`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::butterfly::{train_butterfly, train_two_step, ModelBundle, TrainConfig, TrainInputs};
use crate::config::{DataSpec, ExperimentSpec, Method};
use crate::datasets::{load_feature_csv, load_idx, make_blob_pair, rotate_images, DomainPair, LabeledDataset, ShiftDescriptor};
use crate::error::{Error, Result};
use crate::metrics::{OracleProbe, RunLog, RunSummary};
use crate::noise::NoisyDataset;

/// Derives an independent 64-bit seed from a base seed, a label and an index.
pub fn cell_seed(base: u64, label: &str, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    h.update([0]);
    h.update((index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Source, target and corrupted source labels for one seed index.
pub struct CellData {
    pub pair: DomainPair,
    pub noisy: NoisyDataset,
}

fn subset(ds: &LabeledDataset, range: std::ops::Range<usize>) -> Result<LabeledDataset> {
    let idx: Vec<usize> = range.collect();
    let labels = idx.iter().map(|&i| ds.labels()[i]).collect();
    LabeledDataset::new(ds.features().gather_rows(&idx), labels, ds.classes())
}

/// Data that does not depend on the seed index, loaded once per grid.
enum BaseData {
    Blobs,
    Images { all: LabeledDataset, side: usize },
    Tables { source: LabeledDataset, target: LabeledDataset },
}

fn load_base(spec: &ExperimentSpec) -> Result<BaseData> {
    Ok(match &spec.data {
        DataSpec::Blobs(_) => BaseData::Blobs,
        DataSpec::Idx { images, labels, .. } => {
            let all = load_idx(images, labels)?;
            let side = (all.dim() as f64).sqrt().round() as usize;
            if side * side != all.dim() {
                return Err(Error::InvalidArgument(format!("images of {} pixels are not square", all.dim())));
            }
            BaseData::Images { all, side }
        }
        DataSpec::Csv {
            source,
            target,
            label_column,
            header,
        } => {
            let s = load_feature_csv(source, *label_column, *header)?;
            let t = load_feature_csv(target, *label_column, *header)?;
            let k = s.classes().max(t.classes());
            BaseData::Tables {
                source: LabeledDataset::new(s.features().clone(), s.labels().to_vec(), k)?,
                target: LabeledDataset::new(t.features().clone(), t.labels().to_vec(), k)?,
            }
        }
    })
}

fn cell_data(spec: &ExperimentSpec, base: &BaseData, seed_index: usize) -> Result<CellData> {
    let pair = match (base, &spec.data) {
        (BaseData::Blobs, DataSpec::Blobs(cfg)) => make_blob_pair(cfg, cell_seed(spec.seed, "data", seed_index))?,
        (
            BaseData::Images { all, side },
            DataSpec::Idx {
                n_source,
                n_target,
                rotation,
                ..
            },
        ) => {
            if n_source + n_target > all.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} + {} images requested, file holds {}",
                    n_source,
                    n_target,
                    all.len()
                )));
            }
            let source = subset(all, 0..*n_source)?;
            let (target, shift) = rotate_images(&subset(all, *n_source..n_source + n_target)?, *side, *side, *rotation)?;
            DomainPair::new(source, target, shift)?
        }
        (BaseData::Tables { source, target }, _) => DomainPair::new(source.clone(), target.clone(), ShiftDescriptor::External)?,
        _ => unreachable!("base data follows the data spec"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(spec.noise.seed, "noise", seed_index));
    let noisy = spec.noise.apply(&pair.source, &mut rng)?;
    Ok(CellData { pair, noisy })
}

/// Builds the data of one seed index.
pub fn prepare_cell_data(spec: &ExperimentSpec, seed_index: usize) -> Result<CellData> {
    cell_data(spec, &load_base(spec)?, seed_index)
}

pub struct CellRun {
    pub log: RunLog,
    pub bundle: ModelBundle,
}

/// Trains `method` on `data` and records the oracle-side run log. The
/// training seed depends on the method name, so adding a method to a grid
/// leaves the other cells unchanged.
pub fn run_cell(spec: &ExperimentSpec, data: &CellData, method: Method, seed_index: usize) -> Result<CellRun> {
    let seed = cell_seed(spec.seed, &method.to_string(), seed_index);
    let inputs = TrainInputs {
        source: data.noisy.observed(),
        target: data.pair.target_features(),
    };
    let mut probe = OracleProbe::new(
        &data.noisy.oracle().clean_labels,
        data.pair.target_oracle(),
        spec.eval_head,
    );
    let bundle = match method {
        Method::Butterfly(variant) => {
            let cfg = TrainConfig {
                variant,
                ..spec.train.clone()
            };
            let mut bundle = ModelBundle::new(data.pair.dim(), data.pair.classes(), &spec.model, seed)?;
            train_butterfly(inputs, &mut bundle, &cfg, seed, &mut probe)?;
            bundle
        }
        Method::TwoStep => train_two_step(inputs, &spec.model, &spec.train, seed, &mut probe)?.bundle,
    };
    Ok(CellRun {
        log: probe.into_log(),
        bundle,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Method,
    pub seed_index: usize,
    pub outcome: std::result::Result<(RunSummary, Option<f64>), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub method: Method,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub cells: Vec<CellResult>,
    pub rows: Vec<GridRow>,
}

impl GridReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

pub fn cell_dir(out: &Path, method: Method, seed_index: usize) -> PathBuf {
    out.join(method.to_string()).join(format!("seed{seed_index}"))
}

fn execute(spec: &ExperimentSpec, base: &BaseData, out: &Path, method: Method, seed_index: usize) -> Result<(RunSummary, Option<f64>)> {
    let data = cell_data(spec, base, seed_index)?;
    let dir = cell_dir(out, method, seed_index);
    fs::create_dir_all(&dir)?;
    let run = run_cell(spec, &data, method, seed_index)?;
    fs::write(dir.join("runlog.csv"), run.log.to_csv_string())?;
    run.bundle.save(&dir.join("model.ckpt"))?;
    let summary = run
        .log
        .summary()
        .ok_or_else(|| Error::InvalidArgument("run produced no epochs".into()))?;
    let mut row = String::from("variant,seed_index,final_accuracy,best_accuracy,best_epoch,mean_last5,relabel_accuracy\n");
    let _ = writeln!(
        row,
        "{method},{seed_index},{},{},{},{},{}",
        summary.final_accuracy,
        summary.best_accuracy,
        summary.best_epoch,
        summary.mean_last5,
        run.log.relabel_accuracy.map(|v| v.to_string()).unwrap_or_default()
    );
    fs::write(dir.join("summary.csv"), row)?;
    Ok((summary, run.log.relabel_accuracy))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every (seed index, method) cell of `spec`, writing per-cell
/// artifacts plus `grid_summary.csv`, `cells.csv` and, when any cell failed,
/// `failures.csv` under `out`. A failing cell does not stop the others.
pub fn run_grid(spec: &ExperimentSpec, out: &Path, parallel: bool) -> Result<GridReport> {
    spec.validate()?;
    let base = load_base(spec)?;
    fs::create_dir_all(out)?;
    let jobs: Vec<(usize, Method)> = (0..spec.seeds)
        .flat_map(|s| spec.methods.iter().map(move |&m| (s, m)))
        .collect();
    let work = |&(seed_index, method): &(usize, Method)| CellResult {
        method,
        seed_index,
        outcome: execute(spec, &base, out, method, seed_index).map_err(|e| e.to_string()),
    };
    let cells: Vec<CellResult> = if parallel {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };

    let mut rows = Vec::new();
    let mut grid = String::from("variant,runs,mean_final_accuracy,std_final_accuracy,mean_best_accuracy\n");
    for &method in &spec.methods {
        let ok: Vec<&RunSummary> = cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.outcome.as_ref().ok().map(|(s, _)| s))
            .collect();
        if ok.is_empty() {
            continue;
        }
        let finals: Vec<f64> = ok.iter().map(|s| s.final_accuracy).collect();
        let bests: Vec<f64> = ok.iter().map(|s| s.best_accuracy).collect();
        let (mean, std) = mean_std(&finals);
        let row = GridRow {
            method,
            runs: ok.len(),
            mean,
            std,
            mean_best: mean_std(&bests).0,
        };
        let _ = writeln!(grid, "{},{},{},{},{}", row.method, row.runs, row.mean, row.std, row.mean_best);
        rows.push(row);
    }
    fs::write(out.join("grid_summary.csv"), grid)?;

    let mut all = String::from("variant,seed_index,final_accuracy,best_accuracy,mean_last5,relabel_accuracy,error\n");
    let mut failures = String::from("variant,seed_index,error\n");
    for c in &cells {
        match &c.outcome {
            Ok((s, relabel)) => {
                let _ = writeln!(
                    all,
                    "{},{},{},{},{},{},",
                    c.method,
                    c.seed_index,
                    s.final_accuracy,
                    s.best_accuracy,
                    s.mean_last5,
                    relabel.map(|v| v.to_string()).unwrap_or_default()
                );
            }
            Err(e) => {
                let e = e.replace(['\n', ','], " ");
                let _ = writeln!(all, "{},{},,,,,{e}", c.method, c.seed_index);
                let _ = writeln!(failures, "{},{},{e}", c.method, c.seed_index);
            }
        }
    }
    fs::write(out.join("cells.csv"), all)?;
    let manifest = out.join("failures.csv");
    let report = GridReport { cells, rows };
    if report.failures().next().is_some() {
        fs::write(manifest, failures)?;
    } else if manifest.exists() {
        fs::remove_file(manifest)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Accuracy,
    Rho01S,
    Rho01T,
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "rho01_s" => Ok(Self::Rho01S),
            "rho01_t" => Ok(Self::Rho01T),
            other => Err(format!("unknown quantity `{other}` (accuracy, rho01_s, rho01_t)")),
        }
    }
}

/// A run log tagged with its grid coordinates.
#[derive(Debug, Clone)]
pub struct LabeledRun {
    pub variant: String,
    pub seed: usize,
    pub log: RunLog,
}

/// Long-format `variant,seed,epoch,value` rows. Runs of unequal length are
/// cut to the shortest, and the second return value says so. Epochs where
/// the quantity is undefined are left out.
pub fn emit_figure_series(runs: &[LabeledRun], quantity: Quantity) -> (String, Option<String>) {
    let common = runs.iter().map(|r| r.log.records.len()).min().unwrap_or(0);
    let warning = runs
        .iter()
        .any(|r| r.log.records.len() != common)
        .then(|| format!("runs have different lengths; truncated to the first {common} epochs"));
    let mut out = String::from("variant,seed,epoch,value\n");
    for r in runs {
        for rec in &r.log.records[..common] {
            let v = match quantity {
                Quantity::Accuracy => Some(rec.target_accuracy),
                Quantity::Rho01S => rec.rho01_s,
                Quantity::Rho01T => rec.rho01_t,
            };
            if let Some(v) = v {
                let _ = writeln!(out, "{},{},{},{v}", r.variant, r.seed, rec.epoch);
            }
        }
    }
    (out, warning)
}

/// Reads every `<variant>/seed<i>/runlog.csv` below `dir`, sorted by variant then seed.
pub fn collect_runs(dir: &Path) -> Result<Vec<LabeledRun>> {
    let mut runs = Vec::new();
    for variant in fs::read_dir(dir)? {
        let variant = variant?;
        if !variant.file_type()?.is_dir() {
            continue;
        }
        let name = variant.file_name().to_string_lossy().into_owned();
        for seed_dir in fs::read_dir(variant.path())? {
            let seed_dir = seed_dir?;
            let file = seed_dir.path().join("runlog.csv");
            let seed = seed_dir.file_name().to_string_lossy().strip_prefix("seed").and_then(|s| s.parse().ok());
            if let (Some(seed), true) = (seed, file.is_file()) {
                let log = RunLog::read_csv(fs::File::open(&file)?).map_err(|e| match e {
                    Error::Csv { line, reason, .. } => Error::Csv { path: file.clone(), line, reason },
                    other => other,
                })?;
                runs.push(LabeledRun {
                    variant: name.clone(),
                    seed,
                    log,
                });
            }
        }
    }
    runs.sort_by(|a, b| (&a.variant, a.seed).cmp(&(&b.variant, b.seed)));
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EpochRecord;

    fn log(epochs: usize) -> RunLog {
        let mut l = RunLog::default();
        for e in 1..=epochs {
            l.push(EpochRecord {
                epoch: e,
                target_accuracy: 0.5,
                rho01_s: Some(0.1),
                rho01_t: (e > 1).then_some(0.05),
                ..Default::default()
            })
            .unwrap();
        }
        l
    }

    fn runs(variants: &[&str], seeds: usize, epochs: usize) -> Vec<LabeledRun> {
        variants
            .iter()
            .flat_map(|v| (0..seeds).map(move |s| LabeledRun { variant: v.to_string(), seed: s, log: log(epochs) }))
            .collect()
    }

    fn rows(csv: &str) -> usize {
        csv.lines().count() - 1
    }

    #[test]
    fn figure_row_counts() {
        let (one, w) = emit_figure_series(&runs(&["bnet"], 1, 30), Quantity::Accuracy);
        assert_eq!(rows(&one), 30);
        assert!(w.is_none());
        let (grid, _) = emit_figure_series(&runs(&["bnet", "no-check"], 3, 30), Quantity::Accuracy);
        assert_eq!(rows(&grid), 180);
    }

    #[test]
    fn target_rho_skips_first_epoch() {
        let (csv, _) = emit_figure_series(&runs(&["bnet"], 1, 30), Quantity::Rho01T);
        assert_eq!(rows(&csv), 29);
        assert!(csv.lines().nth(1).unwrap().starts_with("bnet,0,2,"));
    }

    #[test]
    fn unequal_runs_truncate_with_warning() {
        let mut r = runs(&["bnet"], 2, 30);
        r[1].log = log(20);
        let (csv, w) = emit_figure_series(&r, Quantity::Accuracy);
        assert_eq!(rows(&csv), 40);
        assert!(w.unwrap().contains("20"));
    }

    #[test]
    fn cell_seeds_are_label_scoped() {
        assert_eq!(cell_seed(1, "bnet", 0), cell_seed(1, "bnet", 0));
        assert_ne!(cell_seed(1, "bnet", 0), cell_seed(1, "no-check", 0));
        assert_ne!(cell_seed(1, "bnet", 0), cell_seed(1, "bnet", 1));
        assert_ne!(cell_seed(1, "bnet", 0), cell_seed(2, "bnet", 0));
    }
}
