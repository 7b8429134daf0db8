//! Datasets, loaders, synthetic generators, splitting and the teacher
//! feature cache.

pub mod cache;
pub mod idx;
pub mod split;
pub mod synth;
pub mod table;

use sha2::{Digest, Sha256};

pub use cache::{read_cache, read_cache_verified, write_cache, FeatureCache, FeatureGroup};
pub use idx::load_idx;
pub use split::{epoch_batches, split_and_batch, Split};
pub use synth::{synth_blobs, synth_rings};
pub use table::load_csv;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type Fingerprint = [u8; 32];

/// Labeled examples; row `i` of `inputs` carries `labels[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    name: String,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize, name: impl Into<String>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidConfig("dataset has no examples".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.rows(),
                labels: labels.len(),
            });
        }
        if !inputs.is_finite() {
            return Err(Error::NonFinite("dataset inputs"));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Inputs and labels of the given rows, in order.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The given rows as a dataset with the same class count.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let (inputs, labels) = self.batch(indices);
        Dataset::new(inputs, labels, self.class_count, name)
    }

    /// Subset with relabeled classes; `keep` maps old class to new class.
    pub fn relabeled(&self, keep: &[(usize, usize)], name: impl Into<String>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, &y) in self.labels.iter().enumerate() {
            if let Some(&(_, new)) = keep.iter().find(|(old, _)| *old == y) {
                rows.push(i);
                labels.push(new);
            }
        }
        let classes = keep.iter().map(|(_, n)| n + 1).max().unwrap_or(0);
        Dataset::new(self.inputs.select_rows(&rows), labels, classes, name)
    }

    /// Same inputs with labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Dataset::new(self.inputs.clone(), labels, self.class_count, self.name.clone())
    }

    /// SHA-256 over the raw input values (`f64` little-endian), the labels
    /// (`u64` little-endian) and the class count.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        h.update((self.inputs.rows() as u64).to_le_bytes());
        h.update((self.inputs.cols() as u64).to_le_bytes());
        for v in self.inputs.as_slice() {
            h.update(v.to_le_bytes());
        }
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        h.update((self.class_count as u64).to_le_bytes());
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Dataset::new(Matrix::zeros(0, 2), vec![], 2, "x").is_err());
        assert!(matches!(
            Dataset::new(Matrix::zeros(2, 2), vec![0], 2, "x"),
            Err(Error::CountMismatch { .. })
        ));
        assert!(matches!(
            Dataset::new(Matrix::zeros(1, 2), vec![2], 2, "x"),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Dataset::new(Matrix::from_rows(&[vec![1.0], vec![2.0]]), vec![0, 1], 2, "a").unwrap();
        let b = a.with_labels(vec![1, 0]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    #[test]
    fn relabel_subset() {
        let d = Dataset::new(Matrix::column(&[0.0, 1.0, 2.0, 3.0]), vec![0, 1, 2, 3], 4, "d").unwrap();
        let sub = d.relabeled(&[(2, 0), (3, 1)], "sub").unwrap();
        assert_eq!(sub.labels(), &[0, 1]);
        assert_eq!(sub.inputs(), &Matrix::column(&[2.0, 3.0]));
        assert_eq!(sub.class_count(), 2);
    }
}
