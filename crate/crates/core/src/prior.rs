//! Gaussian-process feature priors.
//!
//! A batch of features `Φ` (n × p) induces a zero-mean GP over the batch
//! inputs with the dot-product kernel `K = ΦΦᵀ/p + εI`. Student and teacher
//! are compared through the KL divergence between their two GPs, which only
//! depends on the n × n Gram matrices: the feature widths of the two networks
//! are free to differ.
//!
//! The two baselines (temperature soft targets and plain L2 matching) do
//! compare features entrywise and therefore need equal shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, solve_spd, trace_solve, CholeskyFactor, Matrix};
use crate::nn::loss::log_softmax_rows;

pub const DEFAULT_JITTER: f64 = 1e-4;
pub const DEFAULT_TEMPERATURE: f64 = 4.0;
/// Multiplier applied to the jitter on the single retry after a failed
/// factorization.
pub const JITTER_ESCALATION: f64 = 10.0;

/// Activations of one layer (or layer group) over a batch, `n × p`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self(values))
    }

    pub fn batch(&self) -> usize {
        self.0.rows()
    }

    pub fn width(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl AsRef<Matrix> for FeatureMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// Jittered Gram matrix with its Cholesky factor computed once up front.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    gram: Matrix,
    jitter: f64,
    factor: CholeskyFactor,
}

impl KernelMatrix {
    /// Wraps an already-formed SPD matrix (jitter is recorded, not added).
    pub fn from_gram(gram: Matrix, jitter: f64) -> Result<Self> {
        let factor = cholesky(&gram)?;
        Ok(Self { gram, jitter, factor })
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn size(&self) -> usize {
        self.gram.rows()
    }

    pub fn log_det(&self) -> f64 {
        log_det(&self.factor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    GpKl,
    Hinton,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub alpha: f64,
    pub jitter: f64,
    pub normalize_by_width: bool,
    pub temperature: f64,
    pub distance: Distance,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            jitter: DEFAULT_JITTER,
            normalize_by_width: true,
            temperature: DEFAULT_TEMPERATURE,
            distance: Distance::GpKl,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !positive(self.jitter) {
            return Err(Error::InvalidConfig(format!("jitter must be > 0, got {}", self.jitter)));
        }
        if !positive(self.temperature) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Scale applied to `ΦΦᵀ` for features of width `p`.
    pub fn width_scale(&self, width: usize) -> f64 {
        if self.normalize_by_width {
            1.0 / width as f64
        } else {
            1.0
        }
    }
}

/// Dot-product kernel of a feature batch: `c·ΦΦᵀ + εI`.
///
/// If the factorization fails the jitter is raised once by
/// [`JITTER_ESCALATION`] before giving up.
pub fn gram_kernel(phi: &FeatureMatrix, config: &PriorConfig) -> Result<KernelMatrix> {
    let mut base = phi.values().gram();
    let scale = config.width_scale(phi.width());
    if scale != 1.0 {
        base = base.scale(scale);
    }
    let mut jitter = config.jitter;
    for attempt in 0..2 {
        let mut gram = base.clone();
        gram.add_diagonal(jitter);
        match cholesky(&gram) {
            Ok(factor) => return Ok(KernelMatrix { gram, jitter, factor }),
            Err(Error::NotPositiveDefinite { .. }) if attempt == 0 => {
                log::debug!("gram factorization failed at jitter {jitter:e}; escalating");
                jitter *= JITTER_ESCALATION;
            }
            Err(Error::NotPositiveDefinite { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Err(Error::FactorizationFailed { jitter })
}

fn check_same_size(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<()> {
    if k1.size() != k2.size() {
        return Err(Error::DimensionMismatch(format!(
            "kernels over {} and {} points",
            k1.size(),
            k2.size()
        )));
    }
    Ok(())
}

/// `KL(GP(0, K₁) ‖ GP(0, K₂)) = ½(Tr(K₂⁻¹K₁) − n + log|K₂| − log|K₁|)`.
pub fn gp_kl(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    check_same_size(k1, k2)?;
    let n = k1.size() as f64;
    let trace = trace_solve(k2.factor(), k1.gram())?;
    Ok(0.5 * (trace - n + k2.log_det() - k1.log_det()))
}

/// Gradient of [`gp_kl`] with respect to the student features that built
/// `k1`: `c·(K₂⁻¹ − K₁⁻¹)Φ`.
pub fn gp_kl_grad(phi_s: &FeatureMatrix, k1: &KernelMatrix, k2: &KernelMatrix, config: &PriorConfig) -> Result<Matrix> {
    check_same_size(k1, k2)?;
    if phi_s.batch() != k1.size() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} rows, kernel is over {} points",
            phi_s.batch(),
            k1.size()
        )));
    }
    let phi = phi_s.values();
    let diff = solve_spd(k2.factor(), phi)?.sub(&solve_spd(k1.factor(), phi)?)?;
    Ok(diff.scale(config.width_scale(phi_s.width())))
}

fn check_same_batch(phi_s: &FeatureMatrix, phi_t: &FeatureMatrix) -> Result<()> {
    if phi_s.batch() != phi_t.batch() {
        return Err(Error::BatchMismatch(format!(
            "student features cover {} inputs, teacher features {}",
            phi_s.batch(),
            phi_t.batch()
        )));
    }
    Ok(())
}

/// Unnormalized log prior `−α·KL(student GP ‖ teacher GP)`.
pub fn prior_log_density(phi_s: &FeatureMatrix, phi_t: &FeatureMatrix, config: &PriorConfig) -> Result<f64> {
    check_same_batch(phi_s, phi_t)?;
    let k1 = gram_kernel(phi_s, config)?;
    let k2 = gram_kernel(phi_t, config)?;
    Ok(-config.alpha * gp_kl(&k1, &k2)?)
}

fn check_same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: student {}x{} vs teacher {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Mean cross-entropy `H(σ(z_t/T), σ(z_s/T))` between softened teacher and
/// student distributions.
pub fn hinton_soft_target(logits_s: &Matrix, logits_t: &Matrix, temperature: f64) -> Result<f64> {
    check_same_shape(logits_s, logits_t, "soft targets need matching logit counts")?;
    let log_q = log_softmax_rows(&logits_s.scale(1.0 / temperature));
    let log_p = log_softmax_rows(&logits_t.scale(1.0 / temperature));
    let n = logits_s.rows() as f64;
    let total: f64 = log_p
        .as_slice()
        .iter()
        .zip(log_q.as_slice())
        .map(|(lp, lq)| -lp.exp() * lq)
        .sum();
    Ok(total / n)
}

/// Gradient of [`hinton_soft_target`] with respect to the student logits:
/// `(σ(z_s/T) − σ(z_t/T)) / (T·n)`.
pub fn hinton_soft_target_grad(logits_s: &Matrix, logits_t: &Matrix, temperature: f64) -> Result<Matrix> {
    check_same_shape(logits_s, logits_t, "soft targets need matching logit counts")?;
    let q = log_softmax_rows(&logits_s.scale(1.0 / temperature)).map(f64::exp);
    let p = log_softmax_rows(&logits_t.scale(1.0 / temperature)).map(f64::exp);
    let n = logits_s.rows() as f64;
    Ok(q.sub(&p)?.scale(1.0 / (temperature * n)))
}

/// Mean squared entrywise difference.
pub fn l2_feature_distance(phi_s: &Matrix, phi_t: &Matrix) -> Result<f64> {
    check_same_shape(phi_s, phi_t, "l2 distance")?;
    let count = (phi_s.rows() * phi_s.cols()) as f64;
    let sq: f64 = phi_s
        .as_slice()
        .iter()
        .zip(phi_t.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn raw(jitter: f64) -> PriorConfig {
        PriorConfig {
            jitter,
            normalize_by_width: false,
            ..PriorConfig::default()
        }
    }

    fn features(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(rows)).unwrap()
    }

    fn kernel(m: Matrix) -> KernelMatrix {
        KernelMatrix::from_gram(m, 0.0).unwrap()
    }

    #[test]
    fn gram_examples() {
        let k = gram_kernel(&features(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &raw(0.0)).unwrap();
        assert_eq!(k.gram(), &Matrix::identity(2));

        let k = gram_kernel(&features(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &raw(0.1)).unwrap();
        assert_eq!(k.gram(), &Matrix::diag(&[1.1, 1.1]));

        let k = gram_kernel(&features(&[vec![1.0, 2.0], vec![3.0, 4.0]]), &raw(0.0)).unwrap();
        assert_eq!(k.gram(), &Matrix::from_rows(&[vec![5.0, 11.0], vec![11.0, 25.0]]));
    }

    #[test]
    fn gram_normalizes_by_width() {
        let phi = features(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let k = gram_kernel(
            &phi,
            &PriorConfig {
                jitter: 0.0,
                ..PriorConfig::default()
            },
        )
        .unwrap();
        assert_eq!(k.gram(), &Matrix::from_rows(&[vec![2.5, 5.5], vec![5.5, 12.5]]));
    }

    #[test]
    fn gram_escalates_jitter_once() {
        // rank one: 1 + 1e-16 rounds to 1, so the first attempt hits a zero
        // pivot; 1e-15 survives rounding
        let phi = features(&[vec![1.0], vec![1.0], vec![1.0]]);
        let k = gram_kernel(&phi, &raw(1e-16)).unwrap();
        assert_eq!(k.jitter(), 1e-16 * JITTER_ESCALATION);
        assert!(matches!(
            gram_kernel(&phi, &raw(1e-20)),
            Err(Error::FactorizationFailed { .. })
        ));

        let err = gram_kernel(&phi, &raw(0.0)).unwrap_err();
        assert!(matches!(err, Error::FactorizationFailed { .. }));
    }

    #[test]
    fn kl_examples() {
        let i2 = kernel(Matrix::identity(2));
        let two_i2 = kernel(Matrix::diag(&[2.0, 2.0]));
        assert!(gp_kl(&i2, &i2).unwrap().abs() <= 1e-10);
        // ½(4 − 2 + 0 − log 4)
        assert_abs_diff_eq!(gp_kl(&two_i2, &i2).unwrap(), 0.306853, epsilon = 1e-6);
        // ½(1 − 2 + log 4 − 0)
        assert_abs_diff_eq!(gp_kl(&i2, &two_i2).unwrap(), 0.193147, epsilon = 1e-6);

        let i3 = kernel(Matrix::identity(3));
        assert!(matches!(gp_kl(&i2, &i3), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn kl_grad_vanishes_at_teacher() {
        let phi = features(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, 0.1]]);
        let cfg = PriorConfig::default();
        let k = gram_kernel(&phi, &cfg).unwrap();
        let g = gp_kl_grad(&phi, &k, &k, &cfg).unwrap();
        assert!(g.frobenius_norm() < 1e-6);
    }

    #[test]
    fn prior_density_examples() {
        let phi = features(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, 0.1]]);
        let cfg = PriorConfig::default();
        assert_abs_diff_eq!(prior_log_density(&phi, &phi, &cfg).unwrap(), 0.0, epsilon = 1e-12);

        let short = features(&[vec![1.0, 0.5], vec![-0.3, 2.0]]);
        assert!(matches!(
            prior_log_density(&short, &phi, &cfg),
            Err(Error::BatchMismatch(_))
        ));

        let other = features(&[vec![0.2, 0.5], vec![0.3, -1.0], vec![1.7, 0.4]]);
        let a = prior_log_density(&other, &phi, &cfg).unwrap();
        let b = prior_log_density(&other, &phi, &PriorConfig { alpha: 2.0, ..cfg }).unwrap();
        assert!(a < 0.0);
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn hinton_examples() {
        let t = Matrix::from_rows(&[vec![0.0, 3f64.ln()]]);
        let s = Matrix::from_rows(&[vec![0.0, 0.0]]);
        // p = (¼, ¾), q = (½, ½): H(p, q) = −¼·log ½ − ¾·log ½ = log 2
        let h = hinton_soft_target(&s, &t, 1.0).unwrap();
        assert_abs_diff_eq!(h, 2f64.ln(), epsilon = 1e-12);
        // the student matching the teacher gets H(p) = ¼·log 4 + ¾·log(4/3)
        let h_pp = hinton_soft_target(&t, &t, 1.0).unwrap();
        assert_abs_diff_eq!(h_pp, 0.562335, epsilon = 1e-6);
        assert!(h_pp < h);

        let same = hinton_soft_target(&t, &t, 1.0).unwrap();
        let p = [0.25f64, 0.75];
        let entropy: f64 = p.iter().map(|v| -v * v.ln()).sum();
        assert_abs_diff_eq!(same, entropy, epsilon = 1e-12);

        let z = Matrix::from_rows(&[vec![1.0, -2.0, 5.0]]);
        let w = Matrix::from_rows(&[vec![0.0, 4.0, -1.0]]);
        assert_abs_diff_eq!(hinton_soft_target(&z, &w, 1e9).unwrap(), 3f64.ln(), epsilon = 1e-6);

        let wide = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]);
        assert!(matches!(
            hinton_soft_target(&wide, &t, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn l2_examples() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]);
        assert_eq!(l2_feature_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(l2_feature_distance(&a.map(|v| v + 1.0), &a).unwrap(), 1.0);
        assert_eq!(l2_feature_distance(&a, &Matrix::zeros(1, 2)).unwrap(), 2.5);
        assert!(l2_feature_distance(&a, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PriorConfig::default().validate().is_ok());
        assert!(PriorConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PriorConfig {
            jitter: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PriorConfig {
            temperature: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
