//! Classification metrics and their aggregation across seeds.

use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub accuracy: f64,
    /// `(k, top-k accuracy)` for each requested `k`.
    pub top_k: Vec<(usize, f64)>,
    pub f1_micro: f64,
    pub f1_macro: f64,
}

impl RunMetrics {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.top_k.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = vec![("accuracy".to_string(), self.accuracy)];
        for (k, v) in &self.top_k {
            out.push((format!("top{k}"), *v));
        }
        out.push(("f1_micro".into(), self.f1_micro));
        out.push(("f1_macro".into(), self.f1_macro));
        out
    }
}

/// Class indices sorted by descending score; ties go to the lower index.
fn ranking(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Metrics from raw scores. Macro F1 averages over all `classes`; a class
/// with no true and no predicted examples counts as F1 = 0.
pub fn metrics_from_scores(scores: &Matrix, labels: &[usize], classes: usize, ks: &[usize]) -> RunMetrics {
    let n = labels.len();
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut top_hits = vec![0usize; ks.len()];
    for (i, &y) in labels.iter().enumerate() {
        let order = ranking(scores.row(i));
        let pred = order[0];
        if pred == y {
            tp[y] += 1;
        } else {
            fp[pred] += 1;
            fn_[y] += 1;
        }
        for (slot, &k) in ks.iter().enumerate() {
            if order.iter().take(k).any(|&c| c == y) {
                top_hits[slot] += 1;
            }
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = correct as f64 / n as f64;
    let (stp, sfp, sfn) = (correct, fp.iter().sum(), fn_.iter().sum());
    let f1_micro = f1(stp, sfp, sfn);
    let f1_macro = (0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64;
    RunMetrics {
        accuracy,
        top_k: ks
            .iter()
            .zip(top_hits)
            .map(|(&k, h)| (k, h as f64 / n as f64))
            .collect(),
        f1_micro,
        f1_macro,
    }
}

pub fn evaluate(model: &Model, dataset: &Dataset, ks: &[usize]) -> Result<RunMetrics> {
    let logits = model
        .forward(dataset.inputs(), None)?
        .activations
        .pop()
        .expect("non-empty");
    Ok(metrics_from_scores(
        &logits,
        dataset.labels(),
        dataset.class_count(),
        ks,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std_error: f64,
}

/// Mean and `sample std / √n` of a set of values (standard error 0 for a
/// single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-seed metrics plus their mean and standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_seed: Vec<(u64, RunMetrics)>,
    pub summary: Vec<MetricSummary>,
}

impl MetricsReport {
    /// Runs are sorted by seed before aggregation.
    pub fn from_runs(mut runs: Vec<(u64, RunMetrics)>) -> Self {
        runs.sort_by_key(|(s, _)| *s);
        let names: Vec<String> = runs
            .first()
            .map(|(_, m)| m.named().into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default();
        let summary = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let values: Vec<f64> = runs.iter().map(|(_, m)| m.named()[i].1).collect();
                let (mean, std_error) = mean_and_std_error(&values);
                MetricSummary {
                    metric: name.clone(),
                    mean,
                    std_error,
                }
            })
            .collect();
        Self {
            per_seed: runs,
            summary,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.metric == metric).map(|s| s.mean)
    }

    pub fn std_error(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.metric == metric).map(|s| s.std_error)
    }

    /// Two-column `metric,value` CSV of the means, six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for s in &self.summary {
            out.push_str(&format!("{},{:.6}\n", s.metric, s.mean));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_scores(preds: &[usize], classes: usize) -> Matrix {
        let mut m = Matrix::zeros(preds.len(), classes);
        for (i, &p) in preds.iter().enumerate() {
            m[(i, p)] = 1.0;
        }
        m
    }

    #[test]
    fn perfect_predictions() {
        let labels = [0, 1, 2, 1];
        let m = metrics_from_scores(&one_hot_scores(&labels, 3), &labels, 3, &[1, 2]);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1_micro, 1.0);
        assert_eq!(m.f1_macro, 1.0);
        assert_eq!(m.top(1), Some(1.0));
        assert_eq!(m.top(2), Some(1.0));
    }

    #[test]
    fn constant_prediction_on_balanced_pair() {
        // class 0: P = 0.5, R = 1, F1 = 2/3; class 1: F1 = 0
        let labels = [0, 0, 1, 1];
        let m = metrics_from_scores(&one_hot_scores(&[0, 0, 0, 0], 2), &labels, 2, &[1]);
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1_macro - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn top_c_is_always_one() {
        let scores = Matrix::from_rows(&[vec![0.3, -1.0, 2.0, 0.0], vec![5.0, 4.0, 3.0, 2.0]]);
        // row 0 ranks class 0 second; row 1 ranks class 3 last
        let m = metrics_from_scores(&scores, &[0, 3], 4, &[1, 2, 3, 4]);
        assert_eq!(m.top(1), Some(0.0));
        assert_eq!(m.top(2), Some(0.5));
        assert_eq!(m.top(3), Some(0.5));
        assert_eq!(m.top(4), Some(1.0));
    }

    #[test]
    fn absent_class_counts_as_zero_in_macro() {
        let labels = [0, 1];
        let m = metrics_from_scores(&one_hot_scores(&labels, 3), &labels, 3, &[]);
        assert!((m.f1_macro - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_seed_standard_error() {
        // values 0.8 and 0.9: mean 0.85, sample sd = 0.1/√2, se = sd/√2 = 0.05
        let (mean, se) = mean_and_std_error(&[0.8, 0.9]);
        assert!((mean - 0.85).abs() < 1e-15);
        assert!((se - 0.05).abs() < 1e-15);
        assert_eq!(mean_and_std_error(&[0.3]).1, 0.0);
    }

    #[test]
    fn report_sorts_by_seed() {
        let run = |a: f64| RunMetrics {
            accuracy: a,
            top_k: vec![],
            f1_micro: a,
            f1_macro: a,
        };
        let r = MetricsReport::from_runs(vec![(9, run(0.9)), (1, run(0.8))]);
        assert_eq!(r.per_seed[0].0, 1);
        assert!((r.mean("accuracy").unwrap() - 0.85).abs() < 1e-15);
        assert!(r.to_csv().starts_with("metric,value\naccuracy,0.850000\n"));
    }
}
