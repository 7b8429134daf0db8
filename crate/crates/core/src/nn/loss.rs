use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Row-wise `log softmax`, shifted by the row maximum.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let (n, c) = logits.shape();
    let mut out = Matrix::zeros(n, c);
    for r in 0..n {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (j, v) in row.iter().enumerate() {
            out[(r, j)] = v - lse;
        }
    }
    out
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    log_softmax_rows(logits).map(f64::exp)
}

pub(crate) fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {rows} logit rows",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(labels, logits.rows(), logits.cols())?;
    let log_p = log_softmax_rows(logits);
    let total: f64 = labels.iter().enumerate().map(|(r, &y)| -log_p[(r, y)]).sum();
    Ok(total / logits.rows() as f64)
}
