use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(shape_err("cross_entropy", logits.rows(), labels.len()));
    }
    let k = logits.cols();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes: k,
        });
    }
    Ok(())
}

/// `−log softmax(logits)[label]` per row, via log-sum-exp.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<CrossEntropy> {
    check_labels(logits, labels)?;
    let cap = -PROB_FLOOR.ln();
    let per_sample: Vec<f64> = logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| (log_sum_exp(row) - row[y]).min(cap))
        .collect();
    let mean = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok(CrossEntropy { per_sample, mean })
}

/// Gradient of `Σᵢ wᵢ ℓᵢ` with respect to the logits.
pub fn cross_entropy_grad(logits: &Matrix, labels: &[usize], weights: &[f64]) -> Result<Matrix> {
    check_labels(logits, labels)?;
    if weights.len() != labels.len() {
        return Err(shape_err("cross_entropy_grad", labels.len(), weights.len()));
    }
    let mut g = softmax(logits);
    for (r, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        let row = g.row_mut(r);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= w);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(row: &[f64], y: usize) -> f64 {
        let m = Matrix::new(1, row.len(), row.to_vec()).unwrap();
        cross_entropy(&m, &[y]).unwrap().mean
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        assert!((ce(&[0.0, 0.0], 0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_has_tiny_loss() {
        let l = ce(&[10.0, -10.0], 0);
        assert!(l < 1e-6);
        assert!((l - 2.061e-9).abs() < 1e-11, "{l}");
    }

    #[test]
    fn matches_direct_scalar_evaluation() {
        let e = std::f64::consts::E;
        let direct = -(e.powf(2.0) / (e.powf(1.0) + e.powf(2.0) + e.powf(0.5))).ln();
        assert!((ce(&[1.0, 2.0, 0.5], 1) - direct).abs() < 1e-12);
    }

    #[test]
    fn floor_caps_the_loss() {
        let l = ce(&[0.0, 500.0], 0);
        assert!((l - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            cross_entropy(&m, &[0, 3]),
            Err(Error::LabelOutOfRange { index: 1, label: 3, .. })
        ));
    }

    #[test]
    fn softmax_sums_to_one_for_large_logits() {
        let m = Matrix::new(2, 3, vec![1e3, -1e3, 999.0, -1e3, -1e3, -1e3]).unwrap();
        for r in softmax(&m).iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
