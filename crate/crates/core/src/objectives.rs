//! Losses, the smoothed group-Lasso regularizer, and their first and second
//! derivatives.
//!
//! Gradients are true gradients of the stated values (`∇L_pop = 4(UUᵀ−X⋆)U`).
//! Second derivatives come in two forms: the quadratic form
//! `vec(Z)ᵀ ∇²f vec(Z)` written out term by term, and the Hessian-vector
//! product used by the eigensolver. Tests tie the two together and both to
//! finite differences of the value.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, gram_error, GroundTruth};
use crate::sensing::{SensingKind, SensingSet};

/// Largest `d²` for which a dense set is compressed to its `d² × d²`
/// normal-equation form.
const GRAM_FORM_MAX_WIDTH: usize = 4096;

/// Regularization weight and the tolerances of an approximate second-order
/// stationary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl RegParams {
    pub fn new(lambda: f64, beta: f64, epsilon: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(beta > 0.0) || !(epsilon > 0.0) || !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lambda >= 0 and beta, epsilon, gamma > 0 (got {lambda}, {beta}, {epsilon}, {gamma})"
            )));
        }
        Ok(Self {
            lambda,
            beta,
            epsilon,
            gamma,
        })
    }

    /// `λ ≤ min{β, √β}`, the regime of the smoothness and boundedness results.
    pub fn within_smoothness_regime(&self) -> bool {
        self.lambda <= self.beta.min(self.beta.sqrt())
    }
}

/// `‖v‖² / √(‖v‖² + β)`. `β = 0` gives `‖v‖₂`.
pub fn smooth_l2(v: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    let sq: f64 = v.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Ok(0.0);
    }
    Ok(sq / (sq + beta).sqrt())
}

fn check_beta(beta: f64) {
    assert!(beta > 0.0, "regularizer smoothing beta must be positive, got {beta}");
}

fn column_sq_norms(u: &DMatrix<f64>) -> Vec<f64> {
    u.column_iter().map(|c| c.norm_squared()).collect()
}

/// `R_β(U) = Σ_i ℓ₂^β(U e_i)`.
pub fn reg_value(u: &DMatrix<f64>, beta: f64) -> f64 {
    check_beta(beta);
    column_sq_norms(u).into_iter().map(|sq| sq / (sq + beta).sqrt()).sum()
}

/// `D_ii = (‖Ue_i‖² + 2β) / (‖Ue_i‖² + β)^{3/2}`.
pub fn d_diag(u: &DMatrix<f64>, beta: f64) -> Vec<f64> {
    check_beta(beta);
    column_sq_norms(u)
        .into_iter()
        .map(|sq| (sq + 2.0 * beta) / (sq + beta).powf(1.5))
        .collect()
}

/// `G_ii = (‖Ue_i‖² + 4β) / (‖Ue_i‖² + β)^{5/2}`.
pub fn g_diag(u: &DMatrix<f64>, beta: f64) -> Vec<f64> {
    check_beta(beta);
    column_sq_norms(u)
        .into_iter()
        .map(|sq| (sq + 4.0 * beta) / (sq + beta).powf(2.5))
        .collect()
}

/// `∇R_β(U) = U D(U)`.
pub fn reg_grad(u: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let d = d_diag(u, beta);
    let mut g = u.clone();
    for (j, dj) in d.iter().enumerate() {
        g.column_mut(j).scale_mut(*dj);
    }
    g
}

fn check_same_shape(u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
    if u.shape() != z.shape() {
        return Err(Error::DimensionMismatch(format!(
            "direction is {:?}, factor is {:?}",
            z.shape(),
            u.shape()
        )));
    }
    Ok(())
}

/// `⟨D(U), ZᵀZ⟩ − Σ_i G_ii ⟨Ue_i, Ze_i⟩²`.
pub fn reg_hess_quadform(u: &DMatrix<f64>, beta: f64, z: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(u, z)?;
    let (d, g) = (d_diag(u, beta), g_diag(u, beta));
    Ok((0..u.ncols())
        .map(|i| {
            let zi = z.column(i);
            d[i] * zi.norm_squared() - g[i] * u.column(i).dot(&zi).powi(2)
        })
        .sum())
}

/// Column `i`: `D_ii Ze_i − G_ii ⟨Ue_i, Ze_i⟩ Ue_i`.
pub fn reg_hvp(u: &DMatrix<f64>, beta: f64, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(u, z)?;
    let (d, g) = (d_diag(u, beta), g_diag(u, beta));
    let mut out = z.clone();
    for i in 0..u.ncols() {
        let ui = u.column(i);
        let coef = g[i] * ui.dot(&z.column(i));
        let mut col = out.column_mut(i);
        col.scale_mut(d[i]);
        col.axpy(-coef, &ui, 1.0);
    }
    Ok(out)
}

fn check_truth_rows(u: &DMatrix<f64>, star: &GroundTruth) -> Result<()> {
    if u.nrows() != star.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factor has {} rows, ground truth has {}",
            u.nrows(),
            star.dim()
        )));
    }
    Ok(())
}

/// `‖UUᵀ − U⋆U⋆ᵀ‖_F²`.
pub fn pop_loss(u: &DMatrix<f64>, star: &GroundTruth) -> Result<f64> {
    Ok(gram_error(u, star)?.powi(2))
}

/// `(UUᵀ − U⋆U⋆ᵀ) V` in factored form, `O(dk(k+r))`.
fn residual_times(u: &DMatrix<f64>, s: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    u * u.tr_mul(v) - s * s.tr_mul(v)
}

/// `4 (UUᵀ − U⋆U⋆ᵀ) U`.
pub fn pop_grad(u: &DMatrix<f64>, star: &GroundTruth) -> Result<DMatrix<f64>> {
    check_truth_rows(u, star)?;
    Ok(residual_times(u, star.factor(), u) * 4.0)
}

/// `4⟨Z, (UUᵀ − U⋆U⋆ᵀ)Z⟩ + 2‖UZᵀ + ZUᵀ‖_F²`.
pub fn pop_hess_quadform(u: &DMatrix<f64>, star: &GroundTruth, z: &DMatrix<f64>) -> Result<f64> {
    check_truth_rows(u, star)?;
    check_same_shape(u, z)?;
    let first = z.dot(&residual_times(u, star.factor(), z));
    // ‖UZᵀ + ZUᵀ‖² = 2⟨UᵀU, ZᵀZ⟩ + 2 tr((ZᵀU)²), all k × k.
    let utu = u.tr_mul(u);
    let ztz = z.tr_mul(z);
    let ztu = z.tr_mul(u);
    let sym_sq = 2.0 * utu.dot(&ztz) + 2.0 * ztu.dot(&ztu.transpose());
    Ok(4.0 * first + 2.0 * sym_sq)
}

/// `4 (UZᵀ + ZUᵀ) U + 4 (UUᵀ − U⋆U⋆ᵀ) Z`.
pub fn pop_hvp(u: &DMatrix<f64>, star: &GroundTruth, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_truth_rows(u, star)?;
    check_same_shape(u, z)?;
    let sym_u = u * z.tr_mul(u) + z * u.tr_mul(u);
    Ok((sym_u + residual_times(u, star.factor(), z)) * 4.0)
}

/// Empirical squared loss `(1/n) Σ (⟨A_i, UUᵀ⟩ − y_i)²` over a measured set.
///
/// Dense sets with `d² ≤ 2n` are compressed once to `H = (1/n) Σ vec(A_i)vec(A_i)ᵀ`
/// and `b = (1/n) Σ y_i vec(A_i)`, after which every evaluation costs `O(d⁴)`
/// instead of `O(n d²)`.
#[derive(Debug, Clone)]
pub struct EmpiricalLoss {
    sensing: Arc<SensingSet>,
    y: DVector<f64>,
    gram: Option<Arc<GramForm>>,
}

#[derive(Debug)]
struct GramForm {
    h: DMatrix<f64>,
    b: DVector<f64>,
    mean_y_sq: f64,
}

impl EmpiricalLoss {
    pub fn new(sensing: SensingSet) -> Result<Self> {
        Self::build(sensing, true)
    }

    /// Never compresses; every evaluation walks the `n` measurements.
    pub fn direct(sensing: SensingSet) -> Result<Self> {
        Self::build(sensing, false)
    }

    fn build(sensing: SensingSet, allow_gram: bool) -> Result<Self> {
        if sensing.is_empty() {
            return Err(Error::InvalidArgument("empty sensing set".into()));
        }
        let y = sensing
            .observations()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("sensing set has no observations".into()))?;
        let n = sensing.len() as f64;
        let width = sensing.data().ncols();
        let gram = (allow_gram
            && sensing.kind() == SensingKind::DenseGaussian
            && width <= GRAM_FORM_MAX_WIDTH
            && width <= 2 * sensing.len())
        .then(|| {
            let a = sensing.data();
            Arc::new(GramForm {
                h: a.tr_mul(a) / n,
                b: a.tr_mul(&y) / n,
                mean_y_sq: y.norm_squared() / n,
            })
        });
        Ok(Self {
            sensing: Arc::new(sensing),
            y,
            gram,
        })
    }

    pub fn sensing(&self) -> &SensingSet {
        &self.sensing
    }

    pub fn is_compressed(&self) -> bool {
        self.gram.is_some()
    }

    fn n(&self) -> f64 {
        self.sensing.len() as f64
    }

    fn check(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.nrows() != self.sensing.dim() {
            return Err(Error::DimensionMismatch(format!(
                "factor has {} rows, sensing dimension is {}",
                u.nrows(),
                self.sensing.dim()
            )));
        }
        Ok(())
    }

    pub fn residuals(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check(u)?;
        Ok(self.sensing.predict(u)? - &self.y)
    }

    pub fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        self.check(u)?;
        if let Some(g) = &self.gram {
            let m = u * u.transpose();
            let v = DVector::from_column_slice(m.as_slice());
            let quad = v.dot(&(&g.h * &v));
            return Ok((quad - 2.0 * g.b.dot(&v) + g.mean_y_sq).max(0.0));
        }
        Ok(self.residuals(u)?.norm_squared() / self.n())
    }

    /// `G_M = (2/n) Σ res_i A_i`, the gradient with respect to `M = UUᵀ`
    /// (dense sets only).
    fn dense_grad_m(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.sensing.dim();
        let flat = if let Some(g) = &self.gram {
            let m = u * u.transpose();
            let v = DVector::from_column_slice(m.as_slice());
            (&g.h * v - &g.b) * 2.0
        } else {
            let res = self.sensing.predict(u).expect("checked") - &self.y;
            self.sensing.data().tr_mul(&res) * (2.0 / self.n())
        };
        DMatrix::from_column_slice(d, d, flat.as_slice())
    }

    /// `(2/n) Σ ⟨A_i, S⟩ A_i` for a symmetric `S` (dense sets only).
    fn dense_apply_normal(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.sensing.dim();
        let v = DVector::from_column_slice(s.as_slice());
        let flat = if let Some(g) = &self.gram {
            &g.h * v * 2.0
        } else {
            let a = self.sensing.data();
            a.tr_mul(&(a * v)) * (2.0 / self.n())
        };
        DMatrix::from_column_slice(d, d, flat.as_slice())
    }

    /// `(4/n) Σ res_i A_i U`.
    pub fn gradient(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(u)?;
        Ok(match self.sensing.kind() {
            SensingKind::DenseGaussian => self.dense_grad_m(u) * u * 2.0,
            SensingKind::RankOne => {
                let x = self.sensing.data();
                let xu = x * u;
                let res = DVector::from_fn(xu.nrows(), |i, _| xu.row(i).norm_squared()) - &self.y;
                let weighted = scale_rows(&xu, &res);
                x.tr_mul(&weighted) * (4.0 / self.n())
            }
        })
    }

    /// `(2/n) Σ ⟨A_i, UZᵀ+ZUᵀ⟩² + (4/n) Σ res_i ⟨A_i, ZZᵀ⟩`.
    pub fn hess_quadform(&self, u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
        self.check(u)?;
        check_same_shape(u, z)?;
        let n = self.n();
        Ok(match self.sensing.kind() {
            SensingKind::DenseGaussian => {
                let s = u * z.transpose() + z * u.transpose();
                let curvature = match &self.gram {
                    Some(g) => {
                        let v = DVector::from_column_slice(s.as_slice());
                        2.0 * v.dot(&(&g.h * &v))
                    }
                    None => 2.0 * self.sensing.apply(&s)?.norm_squared() / n,
                };
                let gm = self.dense_grad_m(u);
                curvature + 2.0 * gm.dot(&(z * z.transpose()))
            }
            SensingKind::RankOne => {
                let x = self.sensing.data();
                let (xu, xz) = (x * u, x * z);
                let mut total = 0.0;
                for i in 0..xu.nrows() {
                    let (a, b) = (xu.row(i), xz.row(i));
                    let s = 2.0 * a.dot(&b);
                    let res = a.norm_squared() - self.y[i];
                    total += 2.0 * s * s + 4.0 * res * b.norm_squared();
                }
                total / n
            }
        })
    }

    pub fn hvp(&self, u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(u)?;
        check_same_shape(u, z)?;
        Ok(match self.sensing.kind() {
            SensingKind::DenseGaussian => {
                let s = u * z.transpose() + z * u.transpose();
                let dg = self.dense_apply_normal(&s);
                let gm = self.dense_grad_m(u);
                (dg * u + gm * z) * 2.0
            }
            SensingKind::RankOne => {
                let x = self.sensing.data();
                let (xu, xz) = (x * u, x * z);
                let rows = xu.nrows();
                let s = DVector::from_fn(rows, |i, _| 2.0 * xu.row(i).dot(&xz.row(i)));
                let res = DVector::from_fn(rows, |i, _| xu.row(i).norm_squared() - self.y[i]);
                let combined = scale_rows(&xu, &s) + scale_rows(&xz, &res);
                x.tr_mul(&combined) * (4.0 / self.n())
            }
        })
    }
}

fn scale_rows(m: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, wi) in w.iter().enumerate() {
        out.row_mut(i).scale_mut(*wi);
    }
    out
}

pub fn emp_loss(u: &DMatrix<f64>, loss: &EmpiricalLoss) -> Result<f64> {
    loss.value(u)
}

pub fn emp_grad(u: &DMatrix<f64>, loss: &EmpiricalLoss) -> Result<DMatrix<f64>> {
    loss.gradient(u)
}

pub fn emp_hess_quadform(u: &DMatrix<f64>, loss: &EmpiricalLoss, z: &DMatrix<f64>) -> Result<f64> {
    loss.hess_quadform(u, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Population,
    Empirical,
    QuadraticNetwork,
}

#[derive(Debug, Clone)]
enum DataTerm {
    Population(GroundTruth),
    Empirical(EmpiricalLoss),
    QuadraticNetwork {
        loss: EmpiricalLoss,
        fro_star: f64,
        correction: bool,
    },
}

/// `scale · L(U) + λ R_β(U)` for one of the three data terms.
#[derive(Debug, Clone)]
pub struct Objective {
    data: DataTerm,
    loss_scale: f64,
    reg: Option<(f64, f64)>,
    gradient_offset: f64,
}

impl Objective {
    fn from_data(data: DataTerm) -> Self {
        Self {
            data,
            loss_scale: 1.0,
            reg: None,
            gradient_offset: 0.0,
        }
    }

    pub fn population(star: GroundTruth) -> Self {
        Self::from_data(DataTerm::Population(star))
    }

    pub fn empirical(sensing: SensingSet) -> Result<Self> {
        if sensing.kind() != SensingKind::DenseGaussian {
            return Err(Error::InvalidArgument(
                "empirical objective expects a dense Gaussian set".into(),
            ));
        }
        Ok(Self::from_data(DataTerm::Empirical(EmpiricalLoss::new(sensing)?)))
    }

    pub fn from_empirical_loss(loss: EmpiricalLoss) -> Self {
        Self::from_data(DataTerm::Empirical(loss))
    }

    /// Quadratic-network loss with the trace correction
    /// `−(‖U‖_F² − ‖U⋆‖_F²)²`. When `fro_star` is `None` it is estimated as
    /// the mean observation.
    pub fn quadratic_network(sensing: SensingSet, fro_star: Option<f64>) -> Result<Self> {
        if sensing.kind() != SensingKind::RankOne {
            return Err(Error::InvalidArgument(
                "quadratic-network objective needs rank-one measurements".into(),
            ));
        }
        let loss = EmpiricalLoss::new(sensing)?;
        let fro_star = fro_star.unwrap_or_else(|| loss.y.mean());
        Ok(Self::from_data(DataTerm::QuadraticNetwork {
            loss,
            fro_star,
            correction: true,
        }))
    }

    pub fn with_regularizer(mut self, lambda: f64, beta: f64) -> Self {
        check_beta(beta);
        self.reg = (lambda != 0.0).then_some((lambda, beta));
        self
    }

    /// Multiplies the data term (not the regularizer) by `scale`.
    pub fn with_loss_scale(mut self, scale: f64) -> Self {
        self.loss_scale = scale;
        self
    }

    /// Drops the trace correction of a quadratic-network objective.
    pub fn without_correction(mut self) -> Self {
        if let DataTerm::QuadraticNetwork { correction, .. } = &mut self.data {
            *correction = false;
        }
        self
    }

    /// Adds a constant to every gradient entry. Negative control for the
    /// finite-difference checks only.
    #[doc(hidden)]
    pub fn with_gradient_offset(mut self, offset: f64) -> Self {
        self.gradient_offset = offset;
        self
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.data {
            DataTerm::Population(_) => ObjectiveKind::Population,
            DataTerm::Empirical(_) => ObjectiveKind::Empirical,
            DataTerm::QuadraticNetwork { .. } => ObjectiveKind::QuadraticNetwork,
        }
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        match &self.data {
            DataTerm::Population(star) => Some(star),
            _ => None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.reg.map_or(0.0, |(l, _)| l)
    }

    pub fn beta(&self) -> Option<f64> {
        self.reg.map(|(_, b)| b)
    }

    pub fn loss_scale(&self) -> f64 {
        self.loss_scale
    }

    pub fn fro_star(&self) -> Option<f64> {
        match &self.data {
            DataTerm::QuadraticNetwork { fro_star, .. } => Some(*fro_star),
            _ => None,
        }
    }

    /// Same data term, no regularizer.
    pub fn unregularized(&self) -> Self {
        let mut out = self.clone();
        out.reg = None;
        out
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            DataTerm::Population(star) => star.dim(),
            DataTerm::Empirical(l) | DataTerm::QuadraticNetwork { loss: l, .. } => l.sensing().dim(),
        }
    }

    /// The unregularized, unscaled data loss.
    pub fn data_loss(&self, u: &DMatrix<f64>) -> Result<f64> {
        match &self.data {
            DataTerm::Population(star) => pop_loss(u, star),
            DataTerm::Empirical(l) => l.value(u),
            DataTerm::QuadraticNetwork {
                loss,
                fro_star,
                correction,
            } => {
                let base = loss.value(u)?;
                let c = if *correction {
                    (u.norm_squared() - fro_star).powi(2)
                } else {
                    0.0
                };
                Ok(base - c)
            }
        }
    }

    pub fn value(&self, u: &DMatrix<f64>) -> Result<f64> {
        let reg = self.reg.map_or(0.0, |(l, b)| l * reg_value(u, b));
        Ok(self.loss_scale * self.data_loss(u)? + reg)
    }

    pub fn gradient(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut g = match &self.data {
            DataTerm::Population(star) => pop_grad(u, star)?,
            DataTerm::Empirical(l) => l.gradient(u)?,
            DataTerm::QuadraticNetwork {
                loss,
                fro_star,
                correction,
            } => {
                let mut g = loss.gradient(u)?;
                if *correction {
                    axpy(&mut g, -4.0 * (u.norm_squared() - fro_star), u);
                }
                g
            }
        };
        g *= self.loss_scale;
        if let Some((l, b)) = self.reg {
            axpy(&mut g, l, &reg_grad(u, b));
        }
        if self.gradient_offset != 0.0 {
            g.add_scalar_mut(self.gradient_offset);
        }
        Ok(g)
    }

    pub fn hess_quadform(&self, u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64> {
        let base = match &self.data {
            DataTerm::Population(star) => pop_hess_quadform(u, star, z)?,
            DataTerm::Empirical(l) => l.hess_quadform(u, z)?,
            DataTerm::QuadraticNetwork {
                loss,
                fro_star,
                correction,
            } => {
                let mut q = loss.hess_quadform(u, z)?;
                if *correction {
                    q -= 8.0 * u.dot(z).powi(2) + 4.0 * (u.norm_squared() - fro_star) * z.norm_squared();
                }
                q
            }
        };
        let reg = match self.reg {
            Some((l, b)) => l * reg_hess_quadform(u, b, z)?,
            None => 0.0,
        };
        Ok(self.loss_scale * base + reg)
    }

    pub fn hvp(&self, u: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut h = match &self.data {
            DataTerm::Population(star) => pop_hvp(u, star, z)?,
            DataTerm::Empirical(l) => l.hvp(u, z)?,
            DataTerm::QuadraticNetwork {
                loss,
                fro_star,
                correction,
            } => {
                let mut h = loss.hvp(u, z)?;
                if *correction {
                    axpy(&mut h, -8.0 * u.dot(z), u);
                    axpy(&mut h, -4.0 * (u.norm_squared() - fro_star), z);
                }
                h
            }
        };
        h *= self.loss_scale;
        if let Some((l, b)) = self.reg {
            axpy(&mut h, l, &reg_hvp(u, b, z)?);
        }
        Ok(h)
    }
}

/// `base + λ R_β` with the weights of `reg`.
pub fn regularized(base: Objective, reg: &RegParams) -> Objective {
    base.with_regularizer(reg.lambda, reg.beta)
}

/// Regularized quadratic-network objective over rank-one measurements.
pub fn nn_objective(quad_sensing: SensingSet, fro_star: Option<f64>, reg: &RegParams) -> Result<Objective> {
    Ok(regularized(Objective::quadratic_network(quad_sensing, fro_star)?, reg))
}
