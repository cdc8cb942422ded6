use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{Objective, RegParams};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certification {
    Pass,
    Fail,
    /// The eigensolver did not reach its residual tolerance.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    /// Build the Hessian column by column when `dk` is at most this.
    pub dense_limit: usize,
    /// Lanczos iteration cap; `None` means `max(5√(dk), 40)`, clipped to `dk`.
    pub max_iters: Option<usize>,
    /// Converged when the Ritz residual is at most `rel_tol · ‖H‖` (estimate).
    pub rel_tol: f64,
    /// Seed of the Lanczos start vector.
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            dense_limit: 400,
            max_iters: None,
            rel_tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

impl EigenConfig {
    pub fn lanczos_only() -> Self {
        Self {
            dense_limit: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SospReport {
    pub grad_norm: f64,
    pub lambda_min_estimate: f64,
    pub lambda_min_residual: f64,
    /// Residual bound used for the γ decision.
    pub residual_tolerance: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub eps_certified: bool,
    pub gamma_certified: Certification,
    pub iterations_used: usize,
    pub method: EigenMethod,
}

impl SospReport {
    pub fn certified(&self) -> bool {
        self.eps_certified && self.gamma_certified == Certification::Pass
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DMatrix<f64>,
    pub residual: f64,
    pub op_norm_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: EigenMethod,
}

fn as_matrix(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

fn as_vector(m: DMatrix<f64>) -> DVector<f64> {
    let n = m.len();
    m.reshape_generic(nalgebra::Dyn(n), nalgebra::Const::<1>)
}

/// The full `dk × dk` Hessian, one HVP per column, symmetrized.
pub fn dense_hessian(objective: &Objective, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = u.shape();
    let n = rows * cols;
    let mut h = DMatrix::zeros(n, n);
    let mut e = DMatrix::zeros(rows, cols);
    for j in 0..n {
        e[j] = 1.0;
        let col = objective.hvp(u, &e)?;
        h.column_mut(j).copy_from_slice(col.as_slice());
        e[j] = 0.0;
    }
    Ok((&h + h.transpose()) * 0.5)
}

fn residual(objective: &Objective, u: &DMatrix<f64>, v: &DMatrix<f64>, value: f64) -> Result<f64> {
    let hv = objective.hvp(u, v)?;
    Ok((hv - v * value).norm())
}

fn dense_min_eigenpair(objective: &Objective, u: &DMatrix<f64>) -> Result<EigenPair> {
    let h = dense_hessian(objective, u)?;
    let n = h.nrows();
    let eig = SymmetricEigen::new(h);
    let (idx, value) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let op = eig.eigenvalues.amax();
    let vector = as_matrix(&eig.eigenvectors.column(idx).into_owned(), u.nrows(), u.ncols());
    let res = residual(objective, u, &vector, value)?;
    Ok(EigenPair {
        value,
        vector,
        residual: res,
        op_norm_estimate: op,
        iterations: n,
        converged: true,
        method: EigenMethod::Dense,
    })
}

/// Lanczos with full reorthogonalization on the HVP operator.
fn lanczos_min_eigenpair(objective: &Objective, u: &DMatrix<f64>, config: &EigenConfig) -> Result<EigenPair> {
    let (rows, cols) = u.shape();
    let n = rows * cols;
    let cap = config
        .max_iters
        .unwrap_or_else(|| ((5.0 * (n as f64).sqrt()).ceil() as usize).max(40))
        .clamp(1, n);

    let mut rng = SeededRng::new(config.seed);
    let mut q = rng.normal_vector(n, 1.0);
    q.normalize_mut();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cap);
    let mut alpha: Vec<f64> = Vec::with_capacity(cap);
    let mut beta: Vec<f64> = Vec::with_capacity(cap);
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    let mut op_est = 0.0_f64;

    for j in 0..cap {
        basis.push(q.clone());
        let mut w = as_vector(objective.hvp(u, &as_matrix(&q, rows, cols))?);
        let a = q.dot(&w);
        alpha.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let b_next = w.norm();

        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        op_est = op_est.max(eig.eigenvalues.amax());
        let (idx, theta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let s = eig.eigenvectors.column(idx);
        let est_res = (b_next * s[m - 1]).abs();
        let tol = config.rel_tol * op_est.max(f64::MIN_POSITIVE);
        let exhausted = b_next <= tol || j + 1 == cap;
        if est_res <= tol || exhausted {
            let mut y = DVector::zeros(n);
            for (i, b) in basis.iter().enumerate() {
                y.axpy(s[i], b, 1.0);
            }
            y.normalize_mut();
            let vector = as_matrix(&y, rows, cols);
            let res = residual(objective, u, &vector, theta)?;
            if res <= tol || b_next <= tol {
                return Ok(EigenPair {
                    value: theta,
                    vector,
                    residual: res,
                    op_norm_estimate: op_est,
                    iterations: j + 1,
                    converged: true,
                    method: EigenMethod::Lanczos,
                });
            }
            best = Some((theta, y, res));
            if exhausted {
                break;
            }
        }
        beta.push(b_next);
        q = w / b_next;
    }
    let (value, y, res) = best.expect("loop records a candidate before exiting");
    Ok(EigenPair {
        value,
        vector: as_matrix(&y, rows, cols),
        residual: res,
        op_norm_estimate: op_est,
        iterations: alpha.len(),
        converged: false,
        method: EigenMethod::Lanczos,
    })
}

/// Smallest Hessian eigenvalue of `objective` at `u`.
pub fn hessian_min_eigenpair(objective: &Objective, u: &DMatrix<f64>, config: &EigenConfig) -> Result<EigenPair> {
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty factor".into()));
    }
    if u.len() <= config.dense_limit {
        dense_min_eigenpair(objective, u)
    } else {
        lanczos_min_eigenpair(objective, u, config)
    }
}

/// Checks `‖∇f(U)‖_F ≤ ε` and `λ_min(∇²f(U)) ≥ −γ`.
pub fn certify_sosp(
    objective: &Objective,
    u: &DMatrix<f64>,
    reg: &RegParams,
    config: &EigenConfig,
) -> Result<SospReport> {
    let grad_norm = objective.gradient(u)?.norm();
    let pair = hessian_min_eigenpair(objective, u, config)?;
    let residual_tolerance = config.rel_tol * pair.op_norm_estimate.max(1.0);
    let gamma_certified = if !pair.converged || pair.residual > residual_tolerance {
        Certification::Unknown
    } else if pair.value >= -reg.gamma {
        Certification::Pass
    } else {
        Certification::Fail
    };
    Ok(SospReport {
        grad_norm,
        lambda_min_estimate: pair.value,
        lambda_min_residual: pair.residual,
        residual_tolerance,
        epsilon: reg.epsilon,
        gamma: reg.gamma,
        eps_certified: grad_norm <= reg.epsilon,
        gamma_certified,
        iterations_used: pair.iterations,
        method: pair.method,
    })
}
