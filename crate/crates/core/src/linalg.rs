//! Dense row-major matrices and SPD routines.
//!
//! Everything here is `f64`. The Gram matrices fed to the KL divergence are
//! routinely close to singular (batch larger than feature width), and the
//! log-determinant and trace-of-solve terms lose precision quickly in `f32`.
//!
//! The Cholesky factorization does not pivot and does not add jitter: a
//! failure is reported to the caller, which owns the regularization policy.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative asymmetry above which [`cholesky`] rejects its input.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of arithmetic on valid matrices.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_raw(1, 1, vec![value])
    }

    /// Panics on ragged input; intended for literals and tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_raw(rows.len(), cols, data)
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_raw(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(self.mismatch("matmul", other));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(self.mismatch("matmul_nt", other));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out[(i, j)] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(self.mismatch("matmul_tn", other));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, a) in a_row.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Symmetric `self · selfᵀ`; the upper triangle is mirrored so the
    /// result is exactly symmetric.
    pub fn gram(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(self.mismatch("add_assign", other));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| f(*v)).collect())
    }

    /// Adds `value` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `Σ aᵢⱼ bᵢⱼ`.
    pub fn inner(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(self.mismatch("inner", other));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rows gathered by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    /// Column-wise concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(self.mismatch("hcat", other));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix::from_raw(self.rows, cols, data))
    }

    /// Largest `|aᵢⱼ − aⱼᵢ|` relative to the largest entry magnitude.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(self.mismatch(op, other));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    fn mismatch(&self, op: &str, other: &Matrix) -> Error {
        Error::DimensionMismatch(format!(
            "{op}: {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        ))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn size(&self) -> usize {
        self.lower.rows()
    }

    /// `L Lᵀ`
    pub fn reconstruct(&self) -> Matrix {
        self.lower.gram()
    }

    fn forward_substitute(&self, b: &mut Matrix) {
        let n = self.size();
        let l = &self.lower;
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
        }
    }

    fn back_substitute(&self, b: &mut Matrix) {
        let n = self.size();
        let l = &self.lower;
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / l[(i, i)];
            }
        }
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Inputs whose relative asymmetry is within [`SYMMETRY_TOLERANCE`] are
/// symmetrized as `(A + Aᵀ)/2` first; anything worse is `NotSymmetric`.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    let asym = a.relative_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    let n = a.rows();
    let mut sym = a.clone();
    if asym > 0.0 {
        log::debug!("symmetrizing cholesky input (relative asymmetry {asym:e})");
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                sym[(i, j)] = v;
                sym[(j, i)] = v;
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = sym[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !pivot.is_finite() || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = sym[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// `log |A|` from the factor: `2 Σ log Lᵢᵢ`.
pub fn log_det(f: &CholeskyFactor) -> f64 {
    2.0 * (0..f.size()).map(|i| f.lower[(i, i)].ln()).sum::<f64>()
}

/// Solves `A X = B` by forward then back substitution.
pub fn solve_spd(f: &CholeskyFactor, b: &Matrix) -> Result<Matrix> {
    if b.rows() != f.size() {
        return Err(Error::DimensionMismatch(format!(
            "solve: factor is {n}x{n}, right-hand side has {} rows",
            b.rows(),
            n = f.size()
        )));
    }
    let mut x = b.clone();
    f.forward_substitute(&mut x);
    f.back_substitute(&mut x);
    Ok(x)
}

/// `Tr(A⁻¹ B)` without forming `A⁻¹`.
pub fn trace_solve(f: &CholeskyFactor, b: &Matrix) -> Result<f64> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "trace_solve needs a square right-hand side, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    Ok(solve_spd(f, b)?.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m22() -> Matrix {
        Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]])
    }

    #[test]
    fn identity_is_its_own_factor() {
        let f = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(3));
    }

    #[test]
    fn factor_of_2x2() {
        let f = cholesky(&m22()).unwrap();
        let l = f.lower();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(0, 1)], 0.0);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
        // hand expansion: [[2,0],[1,√2]]·[[2,1],[0,√2]] = [[4,2],[2,3]]
        let back = f.reconstruct();
        assert!(back.sub(&m22()).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { row: 1, .. })));
    }

    #[test]
    fn asymmetric_is_rejected_tiny_asymmetry_is_repaired() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.5, 3.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotSymmetric(_))));

        let b = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0 + 1e-14, 3.0]]);
        let f = cholesky(&b).unwrap();
        assert!(f.reconstruct().sub(&m22()).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(
            cholesky(&Matrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det(&cholesky(&Matrix::identity(4)).unwrap()), 0.0);
        let d = log_det(&cholesky(&Matrix::diag(&[2.0, 2.0])).unwrap());
        assert_abs_diff_eq!(d, 4f64.ln(), epsilon = 1e-12);
        // det = 4·3 − 2·2 = 8
        let d = log_det(&cholesky(&m22()).unwrap());
        assert_abs_diff_eq!(d, 8f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn solve_examples() {
        let b = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]);
        let x = solve_spd(&cholesky(&Matrix::identity(2)).unwrap(), &b).unwrap();
        assert_eq!(x, b);

        let x = solve_spd(&cholesky(&Matrix::diag(&[2.0, 2.0])).unwrap(), &Matrix::identity(2)).unwrap();
        assert!(x.sub(&Matrix::diag(&[0.5, 0.5])).unwrap().max_abs() < 1e-15);

        // 4x + 2y = 1, 2x + 3y = 1 → x = 1/8, y = 1/4
        let x = solve_spd(&cholesky(&m22()).unwrap(), &Matrix::column(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(1, 0)], 0.25, epsilon = 1e-15);

        assert!(matches!(
            solve_spd(&cholesky(&m22()).unwrap(), &Matrix::zeros(3, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn trace_solve_examples() {
        let b = Matrix::from_rows(&[vec![1.0, 7.0, 0.0], vec![2.0, -3.0, 1.0], vec![0.0, 4.0, 5.0]]);
        let t = trace_solve(&cholesky(&Matrix::identity(3)).unwrap(), &b).unwrap();
        assert_abs_diff_eq!(t, b.trace(), epsilon = 1e-15);

        let t = trace_solve(
            &cholesky(&Matrix::diag(&[2.0, 2.0])).unwrap(),
            &Matrix::diag(&[4.0, 4.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(t, 4.0, epsilon = 1e-15);

        // adjugate oracle: [[4,2],[2,3]]⁻¹ = (1/8)[[3,-2],[-2,4]]
        let inv = Matrix::from_rows(&[vec![3.0, -2.0], vec![-2.0, 4.0]]).scale(1.0 / 8.0);
        let b = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let expected = inv.matmul(&b).unwrap().trace();
        assert_abs_diff_eq!(expected, 1.25, epsilon = 1e-15);
        let t = trace_solve(&cholesky(&m22()).unwrap(), &b).unwrap();
        assert_abs_diff_eq!(t, expected, epsilon = 1e-14);

        assert!(trace_solve(&cholesky(&m22()).unwrap(), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matrix_constructor_validates() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(Matrix::new(1, 1, vec![f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn products_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.5, 1.0]]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab, Matrix::from_rows(&[vec![0.5, 7.0], vec![2.0, 16.0]]));
        assert_eq!(a.matmul_nt(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().matmul_tn(&b).unwrap(), ab);
        assert_eq!(a.gram(), a.matmul_nt(&a).unwrap());
    }
}
