//! Oracle-side measurement. Everything here may look at clean source labels
//! and target labels; the training loop only reaches it through [`Probe`].

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::butterfly::{average_probs, EpochSummary, EvalHead, ModelBundle, Origin, Probe, PseudoLabeled};
use crate::butterfly::selection::selection_count;
use crate::datasets::LabeledDataset;
use crate::error::{shape_err, Error, Result};
use crate::nn::loss::PROB_FLOOR;
use crate::nn::matrix::argmax;
use crate::nn::Matrix;

/// Fraction of rows whose argmax equals the label.
pub fn accuracy_from_probs(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(shape_err("accuracy", probs.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy over an empty set".into()));
    }
    let hits = probs.iter_rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy of the target-branch output on oracle-labeled data.
pub fn target_accuracy(bundle: &ModelBundle, target: &LabeledDataset, head: EvalHead) -> Result<f64> {
    accuracy_from_probs(&bundle.predict_proba(target.features(), head)?, target.labels())
}

/// Fraction of `selected` whose flag says incorrect. `None` for an empty selection.
pub fn rho01(selected: &[usize], correct: &[bool]) -> Option<f64> {
    if selected.is_empty() {
        return None;
    }
    let bad = selected.iter().filter(|&&i| !correct[i]).count();
    Some(bad as f64 / selected.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFit {
    /// Smallest `C` with `rho(T) ≤ C/√(nT)` over the series.
    pub c: f64,
    pub series: Vec<(usize, f64)>,
    pub n: usize,
    /// `rho` at the last epoch is below `rho` at the first.
    pub decreasing: bool,
}

pub fn envelope_fit(series: &[(usize, f64)], n: usize) -> Result<EnvelopeFit> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("envelope fit needs a non-empty series".into()));
    }
    if let Some(&(t, r)) = series.iter().find(|(t, r)| *t == 0 || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad envelope point ({t}, {r})")));
    }
    let c = series
        .iter()
        .map(|&(t, r)| r * ((n * t) as f64).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    let first = series.iter().min_by_key(|p| p.0).unwrap().1;
    let last = series.iter().max_by_key(|p| p.0).unwrap().1;
    Ok(EnvelopeFit {
        c,
        series: series.to_vec(),
        n,
        decreasing: last < first,
    })
}

/// Selected-sample empirical risks of the target hypothesis: `a` on source
/// with observed labels, `b` on the same source samples relabeled by the
/// labeling heads, `c` on pseudo-labeled target.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundTerms {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

impl BoundTerms {
    pub fn new(a: Option<f64>, b: Option<f64>, c: Option<f64>) -> Self {
        Self { a, b, c }
    }

    /// `2a + 2b + c`, absent if any term is.
    pub fn composite(&self) -> Option<f64> {
        Some(2.0 * self.a? + 2.0 * self.b? + self.c?)
    }
}

fn prob_loss(p: &[f64], y: usize) -> f64 {
    -p[y].max(PROB_FLOOR).ln()
}

/// Small-loss selection of the rows of `probs` against `labels` at rate
/// `alpha`, returning the kept indices.
fn keep_small(probs: &Matrix, labels: &[usize], alpha: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let loss: Vec<f64> = probs.iter_rows().zip(labels).map(|(p, &y)| prob_loss(p, y)).collect();
    order.sort_by(|&i, &j| loss[i].total_cmp(&loss[j]));
    order.truncate(selection_count(alpha, labels.len()));
    order
}

fn mean_loss(probs: &Matrix, labels: &[usize], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| prob_loss(probs.row(i), labels[i])).sum::<f64>() / idx.len() as f64
}

/// Evaluates [`BoundTerms`] for the current bundle. The source selection
/// keeps a fraction `alpha` of samples by loss on observed labels; the target
/// selection keeps `alpha_t` of the pseudo-labeled set.
pub fn bound_diagnostic(
    bundle: &ModelBundle,
    source: &LabeledDataset,
    pseudo_target: Option<(&Matrix, &[usize])>,
    alpha: f64,
    alpha_t: f64,
) -> Result<BoundTerms> {
    let mut terms = BoundTerms::default();
    if !source.is_empty() {
        let h = bundle.predict_proba(source.features(), EvalHead::Average)?;
        let (p1, p2) = bundle.branch1_probs(source.features())?;
        let relabel: Vec<usize> = average_probs(&p1, &p2).iter_rows().map(argmax).collect();
        let kept = keep_small(&h, source.labels(), alpha);
        terms.a = Some(mean_loss(&h, source.labels(), &kept));
        terms.b = Some(mean_loss(&h, &relabel, &kept));
    }
    if let Some((x, y)) = pseudo_target.filter(|(_, y)| !y.is_empty()) {
        let h = bundle.predict_proba(x, EvalHead::Average)?;
        let kept = keep_small(&h, y, alpha_t);
        terms.c = Some(mean_loss(&h, y, &kept));
    }
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochRecord {
    pub epoch: usize,
    pub target_accuracy: f64,
    /// Incorrect fraction among source samples selected in the mixture branch.
    pub rho01_s: Option<f64>,
    /// Incorrect fraction among pseudo-labeled target samples selected in the target branch.
    pub rho01_t: Option<f64>,
    pub n_pseudo: usize,
    pub pseudo_label_accuracy: Option<f64>,
    pub mean_selected_loss_branch1: f64,
    pub mean_selected_loss_branch2: f64,
    /// Correct fraction among everything the mixture branch selected.
    pub branch1_clean_fraction: Option<f64>,
    pub bound: BoundTerms,
}

const COLUMNS: [&str; 13] = [
    "epoch",
    "target_accuracy",
    "rho01_s",
    "rho01_t",
    "n_pseudo",
    "pseudo_label_accuracy",
    "mean_selected_loss_branch1",
    "mean_selected_loss_branch2",
    "branch1_clean_fraction",
    "bound_a",
    "bound_b",
    "bound_c",
    "bound_composite",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    /// Accuracy of the relabeled source (two-step baseline only).
    pub relabel_accuracy: Option<f64>,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub best_epoch: usize,
    pub mean_last5: f64,
}

impl RunLog {
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::InvalidArgument(format!(
                    "epoch {} does not follow {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn series(&self, f: impl Fn(&EpochRecord) -> Option<f64>) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| f(r).map(|v| (r.epoch, v))).collect()
    }

    pub fn summary(&self) -> Option<RunSummary> {
        let last = self.records.last()?;
        let best = self
            .records
            .iter()
            .fold(&self.records[0], |b, r| if r.target_accuracy > b.target_accuracy { r } else { b });
        let tail = &self.records[self.records.len().saturating_sub(5)..];
        Some(RunSummary {
            final_accuracy: last.target_accuracy,
            best_accuracy: best.target_accuracy,
            best_epoch: best.epoch,
            mean_last5: tail.iter().map(|r| r.target_accuracy).sum::<f64>() / tail.len() as f64,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = COLUMNS.join(",");
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.target_accuracy,
                opt(r.rho01_s),
                opt(r.rho01_t),
                r.n_pseudo,
                opt(r.pseudo_label_accuracy),
                r.mean_selected_loss_branch1,
                r.mean_selected_loss_branch2,
                opt(r.branch1_clean_fraction),
                opt(r.bound.a),
                opt(r.bound.b),
                opt(r.bound.c),
                opt(r.bound.composite()),
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// Parses the output of [`RunLog::write_csv`]. The relabel accuracy is not
    /// part of the table and comes back as `None`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if header != COLUMNS {
            return Err(csv_err(1, format!("unexpected header {}", header.join(","))));
        }
        let mut log = RunLog::default();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| csv_err(line, e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                row[c].parse().map_err(|_| csv_err(line, format!("bad number `{}` in {}", &row[c], COLUMNS[c])))
            };
            let maybe = |c: usize| -> Result<Option<f64>> {
                if row[c].is_empty() {
                    Ok(None)
                } else {
                    num(c).map(Some)
                }
            };
            let int = |c: usize| -> Result<usize> {
                row[c].parse().map_err(|_| csv_err(line, format!("bad count `{}` in {}", &row[c], COLUMNS[c])))
            };
            log.push(EpochRecord {
                epoch: int(0)?,
                target_accuracy: num(1)?,
                rho01_s: maybe(2)?,
                rho01_t: maybe(3)?,
                n_pseudo: int(4)?,
                pseudo_label_accuracy: maybe(5)?,
                mean_selected_loss_branch1: num(6)?,
                mean_selected_loss_branch2: num(7)?,
                branch1_clean_fraction: maybe(8)?,
                bound: BoundTerms::new(maybe(9)?, maybe(10)?, maybe(11)?),
            })?;
        }
        Ok(log)
    }
}

fn csv_err(line: usize, reason: String) -> Error {
    Error::Csv {
        path: "<runlog>".into(),
        line: line as u64,
        reason,
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    bad: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, bad: bool) {
        self.total += 1;
        self.bad += bad as usize;
    }

    fn bad_fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.bad as f64 / self.total as f64)
    }
}

/// Probe that holds the hidden truth and turns the loop's reports into a [`RunLog`].
pub struct OracleProbe<'a> {
    source_clean: &'a [usize],
    target: &'a LabeledDataset,
    head: EvalHead,
    source: Tally,
    target_sel: Tally,
    mixture: Tally,
    pseudo_accuracy: Option<f64>,
    log: RunLog,
}

impl<'a> OracleProbe<'a> {
    pub fn new(source_clean: &'a [usize], target: &'a LabeledDataset, head: EvalHead) -> Self {
        Self {
            source_clean,
            target,
            head,
            source: Tally::default(),
            target_sel: Tally::default(),
            mixture: Tally::default(),
            pseudo_accuracy: None,
            log: RunLog::default(),
        }
    }

    fn wrong(&self, origin: Origin, label: usize) -> bool {
        match origin {
            Origin::Source(i) => self.source_clean[i] != label,
            Origin::Target(i) => self.target.labels()[i] != label,
        }
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_log(self) -> RunLog {
        self.log
    }
}

impl Probe for OracleProbe<'_> {
    fn branch1_selected(&mut self, selected: &[(Origin, usize)]) {
        for &(o, y) in selected {
            let bad = self.wrong(o, y);
            self.mixture.add(bad);
            if matches!(o, Origin::Source(_)) {
                self.source.add(bad);
            }
        }
    }

    fn branch2_selected(&mut self, selected: &[(Origin, usize)]) {
        for &(o, y) in selected {
            if matches!(o, Origin::Target(_)) {
                let bad = self.wrong(o, y);
                self.target_sel.add(bad);
            }
        }
    }

    fn pseudo_labeled(&mut self, labeled: &PseudoLabeled) {
        let mut t = Tally::default();
        for (&i, &y) in labeled.indices.iter().zip(&labeled.labels) {
            t.add(self.target.labels()[i] != y);
        }
        self.pseudo_accuracy = t.bad_fraction().map(|b| 1.0 - b);
    }

    fn source_relabeled(&mut self, labels: &[usize]) {
        let hits = labels.iter().zip(self.source_clean).filter(|(a, b)| a == b).count();
        self.log.relabel_accuracy = (!labels.is_empty()).then(|| hits as f64 / labels.len() as f64);
    }

    fn end_epoch(&mut self, summary: &EpochSummary, bundle: &ModelBundle) -> Result<()> {
        let record = EpochRecord {
            epoch: summary.epoch,
            target_accuracy: target_accuracy(bundle, self.target, self.head)?,
            rho01_s: self.source.bad_fraction(),
            rho01_t: self.target_sel.bad_fraction(),
            n_pseudo: summary.n_pseudo,
            pseudo_label_accuracy: self.pseudo_accuracy.take(),
            mean_selected_loss_branch1: summary.mean_selected_loss_branch1,
            mean_selected_loss_branch2: summary.mean_selected_loss_branch2,
            branch1_clean_fraction: self.mixture.bad_fraction().map(|b| 1.0 - b),
            bound: summary.bound,
        };
        self.source = Tally::default();
        self.target_sel = Tally::default();
        self.mixture = Tally::default();
        self.log.push(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn averaged_heads_pick_class_one() {
        let p1 = Matrix::new(1, 2, vec![0.6, 0.4]).unwrap();
        let p2 = Matrix::new(1, 2, vec![0.3, 0.7]).unwrap();
        let avg = average_probs(&p1, &p2);
        assert!((avg[(0, 0)] - 0.45).abs() < 1e-15);
        assert_eq!(accuracy_from_probs(&avg, &[1]).unwrap(), 1.0);
    }

    #[test]
    fn rho01_examples() {
        let flags = [true, false, true, true];
        assert_eq!(rho01(&[0, 1, 2, 3], &flags), Some(0.25));
        assert_eq!(rho01(&[0, 2], &flags), Some(0.0));
        assert_eq!(rho01(&[], &flags), None);
    }

    #[test]
    fn exact_envelope_has_unit_constant() {
        let n = 100;
        let series: Vec<_> = (1..=30).map(|t| (t, 1.0 / ((n * t) as f64).sqrt())).collect();
        let fit = envelope_fit(&series, n).unwrap();
        assert!((fit.c - 1.0).abs() < 1e-12);
        assert!(fit.decreasing);
    }

    #[test]
    fn constant_series_is_not_decreasing() {
        let series: Vec<_> = (1..=30).map(|t| (t, 0.2)).collect();
        let fit = envelope_fit(&series, 100).unwrap();
        assert!((fit.c - 0.2 * 3000f64.sqrt()).abs() < 1e-12);
        assert!((fit.c - 10.95).abs() < 0.01);
        assert!(!fit.decreasing);
        assert!(envelope_fit(&[], 1).is_err());
        assert!(envelope_fit(&[(0, 0.1)], 1).is_err());
    }

    #[test]
    fn composite_weights() {
        let t = BoundTerms::new(Some(0.1), Some(0.2), Some(0.3));
        assert!((t.composite().unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(BoundTerms::new(Some(0.1), None, Some(0.3)).composite(), None);
    }

    #[test]
    fn summary_reports_final_best_and_tail() {
        let mut log = RunLog::default();
        for (e, a) in [0.5, 0.9, 0.6, 0.7, 0.7, 0.8, 0.7].into_iter().enumerate() {
            log.push(EpochRecord { epoch: e + 1, target_accuracy: a, ..Default::default() }).unwrap();
        }
        let s = log.summary().unwrap();
        assert_eq!(s.final_accuracy, 0.7);
        assert_eq!((s.best_accuracy, s.best_epoch), (0.9, 2));
        assert!((s.mean_last5 - 0.7).abs() < 1e-12);
        assert!(log.push(EpochRecord { epoch: 7, ..Default::default() }).is_err());
    }

    fn frac() -> impl Strategy<Value = f64> {
        0.0..=1.0f64
    }

    fn maybe_frac() -> impl Strategy<Value = Option<f64>> {
        proptest::option::of(frac())
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(
            (frac(), maybe_frac(), maybe_frac(), 0usize..5000, maybe_frac(), 0.0..10.0f64, 0.0..10.0f64, maybe_frac(), maybe_frac(), maybe_frac(), maybe_frac()),
            1..12,
        )) {
            let mut log = RunLog::default();
            for (i, r) in rows.into_iter().enumerate() {
                log.push(EpochRecord {
                    epoch: i + 1,
                    target_accuracy: r.0,
                    rho01_s: r.1,
                    rho01_t: r.2,
                    n_pseudo: r.3,
                    pseudo_label_accuracy: r.4,
                    mean_selected_loss_branch1: r.5,
                    mean_selected_loss_branch2: r.6,
                    branch1_clean_fraction: r.7,
                    bound: BoundTerms::new(r.8, r.9, r.10),
                }).unwrap();
            }
            let mut buf = Vec::new();
            log.write_csv(&mut buf).unwrap();
            let back = RunLog::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, log);
        }
    }
}
