//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use gpkt::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `MMᵀ + I` for a standard normal `M`.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = normal_matrix(n, n, rng);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..n {
                s += m[(i, k)] * m[(j, k)];
            }
            a.as_mut_slice()[i * n + j] = s;
        }
    }
    a
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: eigenvalues and
/// the matrix whose columns are the eigenvectors.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (mkp, mkq) = (row[p], row[q]);
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                let (rp, rq) = (m[p].clone(), m[q].clone());
                for k in 0..n {
                    m[p][k] = c * rp[k] - s * rq[k];
                    m[q][k] = s * rp[k] + c * rq[k];
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

pub fn log_det_oracle(a: &Matrix) -> f64 {
    jacobi_eigen(a).0.iter().map(|l| l.ln()).sum()
}

/// `KL(N(0, K₁) ‖ N(0, K₂))` with `K₂⁻¹` and both determinants taken from
/// eigendecompositions.
pub fn mvn_kl_oracle(k1: &Matrix, k2: &Matrix) -> f64 {
    let n = k1.rows();
    let (l2, v2) = jacobi_eigen(k2);
    let (l1, _) = jacobi_eigen(k1);
    // Tr(K₂⁻¹K₁) = Σ_i v_iᵀ K₁ v_i / λ_i
    let mut trace = 0.0;
    for (i, lambda) in l2.iter().enumerate() {
        let vi: Vec<f64> = (0..n).map(|r| v2[r][i]).collect();
        let mut quad = 0.0;
        for a in 0..n {
            for b in 0..n {
                quad += vi[a] * k1[(a, b)] * vi[b];
            }
        }
        trace += quad / lambda;
    }
    let ld2: f64 = l2.iter().map(|l| l.ln()).sum();
    let ld1: f64 = l1.iter().map(|l| l.ln()).sum();
    0.5 * (trace - n as f64 + ld2 - ld1)
}

/// Central difference of `f` along every coordinate of `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − d| / (|a| + |d| + 1e-12)` over the coordinates.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, d)| (a - d).abs() / (a.abs() + d.abs() + 1e-12))
        .fold(0.0, f64::max)
}

pub fn frobenius_rel(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    diff.sqrt() / b.frobenius_norm().max(1e-300)
}

pub mod bench {
    use gpkt::data::{synth_rings, Dataset, Split};
    use gpkt::nn::{Activation, NetworkSpec, OptimizerConfig};
    use gpkt::train::{ComparisonSetup, LayerGroupMapping, TrainPlan};

    pub const DATA_SEED: u64 = 7;
    pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

    /// Three noisy rings, 400 points each, split in half.
    pub fn rings() -> (Dataset, Split) {
        let dataset = synth_rings(400, 3, 0.25, DATA_SEED).unwrap();
        let split = Split::new(dataset.len(), 0.5, DATA_SEED).unwrap();
        (dataset, split)
    }

    pub fn teacher_plan() -> TrainPlan {
        TrainPlan {
            seed: 1000,
            phase2_epochs: 100,
            phase2_optimizer: OptimizerConfig::adam(3e-3),
            ..TrainPlan::default()
        }
    }

    /// Small batches keep the 16-wide student Gram close to full rank; the
    /// short, slow phase 2 is the limited labeled-training budget.
    pub fn student_plan() -> TrainPlan {
        TrainPlan {
            batch_size: 16,
            phase1_epochs: 50,
            phase2_epochs: 25,
            phase1_optimizer: OptimizerConfig::adam(1e-2),
            phase2_optimizer: OptimizerConfig::adam(5e-4),
            ..TrainPlan::default()
        }
    }

    pub fn relu(widths: &[usize]) -> Vec<(usize, Activation)> {
        widths.iter().map(|&w| (w, Activation::Relu)).collect()
    }

    pub fn setup(student: &[usize], mapping: Vec<(usize, u32)>) -> ComparisonSetup {
        ComparisonSetup {
            teacher_spec: NetworkSpec::mlp(2, &relu(&[64, 64]), 3).unwrap(),
            student_spec: NetworkSpec::mlp(2, &relu(student), 3).unwrap(),
            teacher_plan: teacher_plan(),
            plan: student_plan(),
            mapping: LayerGroupMapping::new(mapping),
            seeds: SEEDS.to_vec(),
            jobs: 1,
        }
    }
}

/// Medians of consecutive `window`-sized chunks; a short tail is dropped.
pub fn window_medians(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks_exact(window)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_by(f64::total_cmp);
            let m = c.len() / 2;
            if c.len() % 2 == 0 {
                0.5 * (c[m - 1] + c[m])
            } else {
                c[m]
            }
        })
        .collect()
}
