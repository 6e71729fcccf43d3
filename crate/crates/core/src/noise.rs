//! Label corruption: transition-matrix resampling and pool mixture, plus
//! empirical transition estimates for validating both.

use rand::Rng;

use crate::datasets::LabeledDataset;
use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;

/// Row-stochastic `K×K` kernel, `q[i][j] = Pr(observed = j | clean = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    q: Matrix,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl TransitionMatrix {
    pub fn from_matrix(q: Matrix) -> Result<Self> {
        if q.rows() != q.cols() || q.rows() < 2 {
            return Err(shape_err("TransitionMatrix", "square, K >= 2", format!("{:?}", q.shape())));
        }
        for (i, row) in q.iter_rows().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { q })
    }

    /// Uniform flipping: `1−ρ` on the diagonal, `ρ/(K−1)` elsewhere.
    pub fn symmetry(classes: usize, rho: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("symmetry flipping needs K >= 2, got {classes}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("noise rate {rho} outside [0, 1)")));
        }
        let off = rho / (classes - 1) as f64;
        let mut q = Matrix::zeros(classes, classes);
        for i in 0..classes {
            for j in 0..classes {
                q[(i, j)] = if i == j { 1.0 - rho } else { off };
            }
        }
        Self::from_matrix(q)
    }

    /// Pair flipping: class `i` moves to `(i+1) mod K` with probability `ρ`.
    pub fn pair(classes: usize, rho: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("pair flipping needs K >= 2, got {classes}")));
        }
        if !(0.0..0.5).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "pair-flip rate {rho} must be in [0, 0.5): at 0.5 the flipped class ties the clean one"
            )));
        }
        let mut q = Matrix::zeros(classes, classes);
        for i in 0..classes {
            q[(i, i)] = 1.0 - rho;
            q[(i, (i + 1) % classes)] += rho;
        }
        Self::from_matrix(q)
    }

    pub fn classes(&self) -> usize {
        self.q.rows()
    }

    pub fn get(&self, clean: usize, observed: usize) -> f64 {
        self.q[(clean, observed)]
    }

    pub fn row(&self, clean: usize) -> &[f64] {
        self.q.row(clean)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.q
    }

    /// Each diagonal entry beats every other entry in its row and column.
    pub fn is_diagonally_dominant(&self) -> bool {
        let k = self.classes();
        (0..k).all(|i| {
            (0..k)
                .filter(|&j| j != i)
                .all(|j| self.q[(i, i)] > self.q[(i, j)] && self.q[(i, i)] > self.q[(j, i)])
        })
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        self.q
            .data()
            .iter()
            .zip(other.q.data())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn sample<R: Rng + ?Sized>(&self, clean: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = self.row(clean);
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(clean)
    }
}

/// Hidden truth about a corrupted dataset. Only metrics code reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionOracle {
    pub clean_labels: Vec<usize>,
    /// `true` where the observed label differs from the clean one.
    pub corruption_flags: Vec<bool>,
}

impl CorruptionOracle {
    pub fn corrupted_fraction(&self) -> f64 {
        if self.corruption_flags.is_empty() {
            return 0.0;
        }
        self.corruption_flags.iter().filter(|&&f| f).count() as f64 / self.corruption_flags.len() as f64
    }
}

/// Source data after corruption. Training sees [`NoisyDataset::observed`];
/// the clean labels live behind [`NoisyDataset::oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    observed: LabeledDataset,
    oracle: CorruptionOracle,
}

impl NoisyDataset {
    pub fn new(clean: &LabeledDataset, observed_labels: Vec<usize>) -> Result<Self> {
        if observed_labels.len() != clean.len() {
            return Err(shape_err("NoisyDataset::new", clean.len(), observed_labels.len()));
        }
        let corruption_flags = clean.labels().iter().zip(&observed_labels).map(|(a, b)| a != b).collect();
        Ok(Self {
            observed: LabeledDataset::new(clean.features().clone(), observed_labels, clean.classes())?,
            oracle: CorruptionOracle {
                clean_labels: clean.labels().to_vec(),
                corruption_flags,
            },
        })
    }

    /// Features with the noisy labels; the only view training code gets.
    pub fn observed(&self) -> &LabeledDataset {
        &self.observed
    }

    pub fn oracle(&self) -> &CorruptionOracle {
        &self.oracle
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

/// Resamples every label independently from its row of `q`.
pub fn corrupt<R: Rng + ?Sized>(clean: &LabeledDataset, q: &TransitionMatrix, rng: &mut R) -> Result<NoisyDataset> {
    if q.classes() != clean.classes() {
        return Err(shape_err("corrupt", clean.classes(), q.classes()));
    }
    let observed = clean.labels().iter().map(|&y| q.sample(y, rng)).collect();
    NoisyDataset::new(clean, observed)
}

/// With probability `rho` per sample, replaces the label with
/// `incorrect_labeler(x, y)`, which must differ from `y`.
pub fn corrupt_by_mixture<R, F>(
    clean: &LabeledDataset,
    rho: f64,
    incorrect_labeler: F,
    rng: &mut R,
) -> Result<NoisyDataset>
where
    R: Rng + ?Sized,
    F: Fn(&[f64], usize) -> usize,
{
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("mixture rate {rho} outside [0, 1]")));
    }
    let mut observed = Vec::with_capacity(clean.len());
    for (i, (x, &y)) in clean.features().iter_rows().zip(clean.labels()).enumerate() {
        if rng.random::<f64>() < rho {
            let wrong = incorrect_labeler(x, y);
            if wrong == y {
                return Err(Error::InvalidArgument(format!(
                    "incorrect labeler returned the clean label {y} for sample {i}"
                )));
            }
            if wrong >= clean.classes() {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label: wrong,
                    classes: clean.classes(),
                });
            }
            observed.push(wrong);
        } else {
            observed.push(y);
        }
    }
    NoisyDataset::new(clean, observed)
}

/// Row-normalized clean→observed counts. Rows for classes absent from the
/// clean labels are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTransition {
    pub rows: Vec<Option<Vec<f64>>>,
}

impl EmpiricalTransition {
    pub fn undefined_rows(&self) -> Vec<usize> {
        self.rows.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect()
    }

    /// The estimate as a transition matrix, if every row is populated.
    pub fn to_matrix(&self) -> Option<TransitionMatrix> {
        let rows: Option<Vec<Vec<f64>>> = self.rows.iter().cloned().collect();
        TransitionMatrix::from_matrix(Matrix::from_rows(&rows?).ok()?).ok()
    }

    /// Largest entry-wise deviation over populated rows.
    pub fn max_abs_diff(&self, q: &TransitionMatrix) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
            .flat_map(|(i, r)| r.iter().zip(q.row(i)).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn empirical_transition(noisy: &NoisyDataset, classes: usize) -> Result<EmpiricalTransition> {
    let mut counts = vec![vec![0usize; classes]; classes];
    for (i, (&c, &o)) in noisy.oracle().clean_labels.iter().zip(noisy.observed().labels()).enumerate() {
        if c >= classes || o >= classes {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: c.max(o),
                classes,
            });
        }
        counts[c][o] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect();
    Ok(EmpiricalTransition { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetry,
    Pair,
    Mixture,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "symmetry" => Ok(Self::Symmetry),
            "pair" => Ok(Self::Pair),
            "mixture" => Ok(Self::Mixture),
            other => Err(format!("unknown noise kind `{other}` (symmetry, pair, mixture)")),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Symmetry => "symmetry",
            Self::Pair => "pair",
            Self::Mixture => "mixture",
        })
    }
}

/// Corruption settings as they appear under `noise.*` in a run config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rho: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Mixture noise uses the labeler `y → (y+1) mod K`.
    pub fn apply<R: Rng + ?Sized>(&self, clean: &LabeledDataset, rng: &mut R) -> Result<NoisyDataset> {
        let k = clean.classes();
        match self.kind {
            NoiseKind::Symmetry => corrupt(clean, &TransitionMatrix::symmetry(k, self.rho)?, rng),
            NoiseKind::Pair => corrupt(clean, &TransitionMatrix::pair(k, self.rho)?, rng),
            NoiseKind::Mixture => corrupt_by_mixture(clean, self.rho, |_, y| (y + 1) % k, rng),
        }
    }
}
