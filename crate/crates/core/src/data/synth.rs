//! Synthetic classification tasks with known structure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_counts(n_per_class: usize, classes: usize) -> Result<()> {
    if n_per_class == 0 || classes == 0 {
        return Err(Error::InvalidConfig(
            "synthetic data needs n_per_class ≥ 1 and classes ≥ 1".into(),
        ));
    }
    Ok(())
}

/// Class centers whose nearest pair is exactly `separation` apart: evenly
/// spaced on a circle in the first two coordinates, or on a line when
/// `dim == 1`.
pub fn blob_centers(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| {
            let mut c = vec![0.0; dim];
            if dim == 1 || classes == 1 {
                c[0] = k as f64 * separation;
            } else {
                let radius = separation / (2.0 * (PI / classes as f64).sin());
                let angle = 2.0 * PI * k as f64 / classes as f64;
                c[0] = radius * angle.cos();
                c[1] = radius * angle.sin();
            }
            c
        })
        .collect()
}

/// Unit-variance Gaussian clusters, `n_per_class` points each, stored class
/// by class.
pub fn synth_blobs(n_per_class: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    check_counts(n_per_class, classes)?;
    if dim == 0 {
        return Err(Error::InvalidConfig("blobs need dim ≥ 1".into()));
    }
    if separation.is_nan() || separation <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "separation must be > 0, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = blob_centers(classes, dim, separation);
    let mut data = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            for c in center {
                let z: f64 = rng.sample(StandardNormal);
                data.push(c + z);
            }
            labels.push(k);
        }
    }
    let inputs = Matrix::new(n_per_class * classes, dim, data)?;
    Dataset::new(inputs, labels, classes, format!("blobs-{classes}x{n_per_class}"))
}

/// Concentric rings in 2D: class `k` sits at radius `k + 1` with a uniform
/// angle, plus isotropic Gaussian noise of standard deviation `noise`.
pub fn synth_rings(n_per_class: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_counts(n_per_class, classes)?;
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::InvalidConfig(format!("noise must be ≥ 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_per_class * classes * 2);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for k in 0..classes {
        let radius = (k + 1) as f64;
        for _ in 0..n_per_class {
            let angle = rng.gen_range(0.0..2.0 * PI);
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            data.push(radius * angle.cos() + noise * zx);
            data.push(radius * angle.sin() + noise * zy);
            labels.push(k);
        }
    }
    let inputs = Matrix::new(n_per_class * classes, 2, data)?;
    Dataset::new(inputs, labels, classes, format!("rings-{classes}x{n_per_class}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky, solve_spd};

    /// Least-squares one-hot regression with bias; argmax of the fitted
    /// scores is a linear classifier.
    fn linear_probe_accuracy(train: &Dataset, test: &Dataset) -> f64 {
        let design = |d: &Dataset| {
            let ones = Matrix::filled(d.len(), 1, 1.0);
            d.inputs().hcat(&ones).unwrap()
        };
        let x = design(train);
        let mut y = Matrix::zeros(train.len(), train.class_count());
        for (i, &l) in train.labels().iter().enumerate() {
            y[(i, l)] = 1.0;
        }
        let mut xtx = x.matmul_tn(&x).unwrap();
        xtx.add_diagonal(1e-9);
        let w = solve_spd(&cholesky(&xtx).unwrap(), &x.matmul_tn(&y).unwrap()).unwrap();
        let scores = design(test).matmul(&w).unwrap();
        let hits = (0..test.len())
            .filter(|&i| {
                let row = scores.row(i);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                best == test.labels()[i]
            })
            .count();
        hits as f64 / test.len() as f64
    }

    #[test]
    fn well_separated_blobs_are_linearly_separable() {
        let train = synth_blobs(200, 2, 2, 10.0, 1).unwrap();
        let test = synth_blobs(500, 2, 2, 10.0, 2).unwrap();
        assert!(linear_probe_accuracy(&train, &test) >= 0.999);
    }

    #[test]
    fn overlapping_blobs_are_near_chance() {
        let train = synth_blobs(500, 2, 2, 0.01, 1).unwrap();
        let test = synth_blobs(1000, 2, 2, 0.01, 2).unwrap();
        let acc = linear_probe_accuracy(&train, &test);
        assert!(acc < 0.55, "accuracy {acc}");
    }

    #[test]
    fn centers_are_separated() {
        for (classes, dim) in [(2, 2), (3, 2), (4, 5), (3, 1)] {
            let c = blob_centers(classes, dim, 3.0);
            let mut min = f64::INFINITY;
            for i in 0..classes {
                for j in 0..i {
                    let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    min = min.min(d);
                }
            }
            assert!((min - 3.0).abs() < 1e-9, "{classes} classes in {dim}d: {min}");
        }
    }

    #[test]
    fn noiseless_rings_are_determined_by_radius() {
        let d = synth_rings(50, 3, 0.0, 4).unwrap();
        for i in 0..d.len() {
            let r = d.inputs().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - (d.labels()[i] + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rings_defeat_a_linear_probe() {
        let train = synth_rings(300, 3, 0.1, 1).unwrap();
        let test = synth_rings(300, 3, 0.1, 2).unwrap();
        let acc = linear_probe_accuracy(&train, &test);
        assert!(acc <= 0.6, "accuracy {acc}");
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(
            synth_blobs(10, 3, 4, 2.0, 7).unwrap(),
            synth_blobs(10, 3, 4, 2.0, 7).unwrap()
        );
        assert_ne!(
            synth_blobs(10, 3, 4, 2.0, 7).unwrap(),
            synth_blobs(10, 3, 4, 2.0, 8).unwrap()
        );
        assert_eq!(synth_rings(10, 3, 0.2, 7).unwrap(), synth_rings(10, 3, 0.2, 7).unwrap());
        assert!(synth_blobs(10, 2, 2, 0.0, 1).is_err());
        assert!(synth_rings(10, 2, -1.0, 1).is_err());
    }
}
