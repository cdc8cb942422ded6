//! Dense factor containers and the column-wise and spectral helpers shared by
//! the objectives, the solver and the pruning pipeline.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as an exactly zero column.
pub const ZERO_COLUMN_NORM: f64 = 1e-14;

const POWER_ITERATION_CAP: usize = 20_000;
const POWER_ITERATION_TOL: f64 = 1e-9;
const SVD_DIMENSION_LIMIT: usize = 64;

/// A `d × k` real matrix whose columns are the learner's factors.
///
/// Construction rejects empty shapes and non-finite entries, so every
/// `FactorMatrix` in circulation is a valid model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix(DMatrix<f64>);

impl FactorMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "factor must be at least 1x1, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos % matrix.nrows(),
                pos / matrix.nrows(),
                matrix[pos]
            )));
        }
        Ok(Self(matrix))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "factor must be at least 1x1");
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn from_column_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} factor",
                data.len()
            )));
        }
        Self::new(DMatrix::from_column_slice(rows, cols, data))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("no columns selected".into()));
        }
        Ok(Self(self.0.select_columns(indices)))
    }

    /// Appends zero columns until the factor has `cols` columns.
    pub fn padded_to(&self, cols: usize) -> Self {
        let mut out = DMatrix::zeros(self.rows(), cols.max(self.cols()));
        out.columns_mut(0, self.cols()).copy_from(&self.0);
        Self(out)
    }
}

impl Deref for FactorMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<FactorMatrix> for DMatrix<f64> {
    fn from(value: FactorMatrix) -> Self {
        value.0
    }
}

/// The unknown rank-`r` factor `U⋆` together with its singular values.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    factor: FactorMatrix,
    singular_values: Vec<f64>,
}

impl GroundTruth {
    /// Wraps a factor, recording its singular values in nonincreasing order.
    pub fn new(factor: FactorMatrix) -> Result<Self> {
        if factor.cols() > factor.rows() {
            return Err(Error::InvalidArgument(format!(
                "ground truth rank {} exceeds dimension {}",
                factor.cols(),
                factor.rows()
            )));
        }
        let singular_values = singular_values(factor.matrix());
        if singular_values.last().copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::InvalidArgument("ground truth factor is rank deficient".into()));
        }
        Ok(Self {
            factor,
            singular_values,
        })
    }

    pub fn factor(&self) -> &FactorMatrix {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn rank(&self) -> usize {
        self.factor.cols()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn sigma_one(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_r_star(&self) -> f64 {
        *self.singular_values.last().expect("rank >= 1")
    }

    /// `‖U⋆‖_F²`, the trace of the planted matrix.
    pub fn frobenius_sq(&self) -> f64 {
        self.factor.norm_squared()
    }

    /// `U⋆U⋆ᵀ`, materialized.
    pub fn gram(&self) -> DMatrix<f64> {
        self.factor.matrix() * self.factor.transpose()
    }
}

const SVD_SWEEP_CAP: usize = 5000;

/// Dense SVD with an iteration cap. The unbounded nalgebra routine can stall
/// on factors whose columns have decayed to the subnormal range, so a failed
/// attempt is retried with entries below `1e-150` flushed to zero.
pub(crate) fn capped_svd(m: &DMatrix<f64>, vectors: bool) -> Option<SVD<f64, Dyn, Dyn>> {
    m.clone()
        .try_svd(vectors, vectors, f64::EPSILON, SVD_SWEEP_CAP)
        .or_else(|| {
            m.map(|v| if v.abs() < 1e-150 { 0.0 } else { v })
                .try_svd(vectors, vectors, f64::EPSILON, SVD_SWEEP_CAP)
        })
}

/// Singular values, nonincreasing.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = match capped_svd(m, false) {
        Some(svd) => svd.singular_values.iter().copied().collect(),
        None => {
            let gram = if m.ncols() <= m.nrows() {
                m.tr_mul(m)
            } else {
                m * m.transpose()
            };
            SymmetricEigen::new(gram)
                .eigenvalues
                .iter()
                .map(|l| l.max(0.0).sqrt())
                .collect()
        }
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn column_norms(u: &DMatrix<f64>) -> Vec<f64> {
    u.column_iter().map(|c| c.norm()).collect()
}

/// Largest singular value.
///
/// Small shapes go through a dense SVD; otherwise power iteration on the
/// smaller Gram matrix runs until the Rayleigh quotient settles to a relative
/// change of `1e-9`.
pub fn op_norm(u: &DMatrix<f64>) -> Result<f64> {
    if u.nrows().min(u.ncols()) <= SVD_DIMENSION_LIMIT {
        return Ok(singular_values(u)[0]);
    }
    op_norm_power(u)
}

pub(crate) fn op_norm_power(u: &DMatrix<f64>) -> Result<f64> {
    let gram = if u.ncols() <= u.nrows() {
        u.tr_mul(u)
    } else {
        u * u.transpose()
    };
    let n = gram.nrows();
    // Deterministic start with weight on every coordinate.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v.normalize_mut();
    let mut lambda = 0.0_f64;
    for _ in 0..POWER_ITERATION_CAP {
        let w = &gram * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = w / norm;
        if (next - lambda).abs() <= POWER_ITERATION_TOL * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
    }
    Err(Error::NonConvergence {
        method: "power iteration",
        iterations: POWER_ITERATION_CAP,
    })
}

/// `‖UUᵀ − U⋆U⋆ᵀ‖_F`, unsquared.
///
/// When `d` exceeds `k + r` the difference is written as `W S Wᵀ` with
/// `W = [U, U⋆]`, `S = diag(I, −I)`; a thin QR of `W` gives the norm as
/// `‖R S Rᵀ‖_F`, which costs `O(d (k+r)²)` and never forms a `d × d` matrix.
pub fn gram_error(u: &DMatrix<f64>, star: &GroundTruth) -> Result<f64> {
    let s = star.factor().matrix();
    if u.nrows() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "factor has {} rows, ground truth has {}",
            u.nrows(),
            s.nrows()
        )));
    }
    Ok(gram_distance(u, s))
}

pub(crate) fn gram_distance(u: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let d = u.nrows();
    let (k, r) = (u.ncols(), s.ncols());
    if d <= k + r {
        let diff = u * u.transpose() - s * s.transpose();
        return diff.norm();
    }
    let mut w = DMatrix::zeros(d, k + r);
    w.columns_mut(0, k).copy_from(u);
    w.columns_mut(k, r).copy_from(s);
    let rr = w.qr().r();
    let mut rs = rr.clone();
    for j in k..k + r {
        rs.column_mut(j).neg_mut();
    }
    (rs * rr.transpose()).norm()
}

/// The Gram-trace route `‖UᵀU‖² − 2‖U⋆ᵀU‖² + ‖U⋆ᵀU⋆‖²` for the squared error.
/// Cheap, but loses relative accuracy once the error is below `~1e-8`.
pub fn gram_error_sq_trace(u: &DMatrix<f64>, star: &GroundTruth) -> f64 {
    let s = star.factor().matrix();
    let utu = u.tr_mul(u).norm_squared();
    let stu = s.tr_mul(u).norm_squared();
    let sts = s.tr_mul(s).norm_squared();
    (utu - 2.0 * stu + sts).max(0.0)
}

/// Pairwise column cosines; pairs touching a zero column get 0.
pub fn column_cosines(u: &DMatrix<f64>) -> DMatrix<f64> {
    let norms = column_norms(u);
    let gram = u.tr_mul(u);
    let k = u.ncols();
    DMatrix::from_fn(k, k, |i, j| {
        if norms[i] < ZERO_COLUMN_NORM || norms[j] < ZERO_COLUMN_NORM {
            0.0
        } else if i == j {
            1.0
        } else {
            (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

/// Largest off-diagonal `|cosine|`; 0 for a single column.
pub fn max_abs_offdiag_cosine(u: &DMatrix<f64>) -> f64 {
    let c = column_cosines(u);
    let mut worst = 0.0_f64;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            if i != j {
                worst = worst.max(c[(i, j)].abs());
            }
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub min: f64,
    pub max: f64,
}

pub fn column_summary(u: &DMatrix<f64>) -> ColumnSummary {
    let norms = column_norms(u);
    ColumnSummary {
        min: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max: norms.iter().copied().fold(0.0, f64::max),
    }
}

/// `y ← y + a·x` for same-shape matrices.
pub(crate) fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use approx::assert_relative_eq;

    fn truth(m: DMatrix<f64>) -> GroundTruth {
        GroundTruth::new(FactorMatrix::new(m).unwrap()).unwrap()
    }

    #[test]
    fn factor_rejects_nan_and_empty() {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(FactorMatrix::new(m), Err(Error::NonFinite(_))));
        assert!(FactorMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn column_norm_examples() {
        assert_eq!(column_norms(&DMatrix::zeros(3, 2)), vec![0.0, 0.0]);
        assert_eq!(column_norms(&DMatrix::identity(2, 2)), vec![1.0, 1.0]);
        let m = DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        assert_eq!(column_norms(&m)[0], 5.0);
    }

    #[test]
    fn op_norm_examples() {
        assert_relative_eq!(op_norm(&DMatrix::identity(2, 2)).unwrap(), 1.0, epsilon = 1e-14);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_relative_eq!(op_norm(&diag).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn op_norm_power_matches_svd() {
        let mut rng = SeededRng::new(11);
        let m = rng.normal_matrix(8, 5, 1.0);
        let svd = singular_values(&m)[0];
        let power = op_norm_power(&m).unwrap();
        assert_relative_eq!(power, svd, max_relative = 1e-8);
        let wide = rng.normal_matrix(70, 90, 1.0);
        assert_relative_eq!(op_norm(&wide).unwrap(), singular_values(&wide)[0], max_relative = 1e-8);
    }

    #[test]
    fn gram_error_zero_for_padded_truth() {
        let mut rng = SeededRng::new(5);
        let star = truth(rng.normal_matrix(6, 2, 1.0));
        let padded = star.factor().padded_to(5);
        assert!(gram_error(&padded, &star).unwrap() < 1e-14);
    }

    #[test]
    fn gram_error_origin_unit_column() {
        let star = truth(DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]));
        assert_relative_eq!(gram_error(&DMatrix::zeros(3, 2), &star).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gram_error_matches_dense_oracle_both_routes() {
        let mut rng = SeededRng::new(9);
        for &(d, k, r) in &[(6, 4, 2), (12, 3, 2), (5, 7, 3)] {
            let star = truth(rng.normal_matrix(d, r, 1.0));
            let u = rng.normal_matrix(d, k, 1.0);
            let dense = (&u * u.transpose() - star.gram()).norm();
            assert_relative_eq!(gram_error(&u, &star).unwrap(), dense, max_relative = 1e-10);
            assert_relative_eq!(gram_error_sq_trace(&u, &star), dense * dense, max_relative = 1e-10);
        }
    }

    #[test]
    fn gram_error_dimension_mismatch() {
        let star = truth(DMatrix::identity(3, 1));
        assert!(gram_error(&DMatrix::zeros(4, 2), &star).is_err());
    }

    #[test]
    fn cosine_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(column_cosines(&eye), eye);
        let dup = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert_relative_eq!(column_cosines(&dup)[(0, 1)], 1.0, epsilon = 1e-15);
        let m = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert_relative_eq!(column_cosines(&m)[(0, 1)], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        let with_zero = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let c = column_cosines(&with_zero);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(1, 1)], 0.0);
        assert_eq!(c[(0, 0)], 1.0);
    }
}
