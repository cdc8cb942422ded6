use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms, gram_error, FactorMatrix, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldScale {
    /// `dU/dt = −(UUᵀ − X⋆)U`, a quarter of the true gradient.
    Quarter,
    /// `dU/dt = −4(UUᵀ − X⋆)U`.
    TrueGradient,
}

impl FieldScale {
    fn factor(self) -> f64 {
        match self {
            FieldScale::Quarter => 1.0,
            FieldScale::TrueGradient => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub scale: FieldScale,
    /// Local error per step, relative to `max(‖U‖_F, 1e-300)`.
    pub rel_tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Snapshot spacing in time units.
    pub snapshot_every: f64,
    /// Stop once `‖∇L_pop(U)‖_F = 4‖(UUᵀ − X⋆)U‖_F` falls below this,
    /// whatever the field scale. Only checked after `‖UUᵀ − X⋆‖_F` has
    /// dropped below half of `‖X⋆‖_F`, so a tiny start near the origin
    /// saddle does not count as converged.
    pub stop_grad_norm: Option<f64>,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scale: FieldScale::Quarter,
            rel_tol: 1e-9,
            initial_step: 1e-2,
            min_step: 1e-12,
            max_step: 0.5,
            snapshot_every: 0.25,
            stop_grad_norm: None,
            max_steps: 2_000_000,
        }
    }
}

/// Signal/noise split for a rank-one truth: `r = Uᵀu⋆`, `E = (I − u⋆u⋆ᵀ)U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSplit {
    pub r_norm: f64,
    pub e_norm: f64,
    pub r_abs: Vec<f64>,
    /// `‖U − u⋆rᵀ − E‖_F`.
    pub reconstruction_error: f64,
}

impl SignalSplit {
    pub fn compute(u: &DMatrix<f64>, u_star: &DVector<f64>) -> Self {
        let r = u.tr_mul(u_star);
        let e = u - u_star * r.transpose();
        let rebuilt = u_star * r.transpose() + &e;
        Self {
            r_norm: r.norm(),
            e_norm: e.norm(),
            r_abs: r.iter().map(|v| v.abs()).collect(),
            reconstruction_error: (u - rebuilt).norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSnapshot {
    pub t: f64,
    pub column_norms: Vec<f64>,
    pub gram_error: f64,
    pub field_norm: f64,
    pub split: Option<SignalSplit>,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub snapshots: Vec<FlowSnapshot>,
    /// Characteristic time of signal growth; `None` unless `r = 1` and
    /// `‖E(0)‖_F < 1`.
    pub t0: Option<f64>,
    pub r0: Option<Vec<f64>>,
    pub final_u: FactorMatrix,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Stopped on `stop_grad_norm` before `t_end`.
    pub converged: bool,
}

fn field(u: &DMatrix<f64>, star: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    // (UUᵀ − SSᵀ)U = U(UᵀU) − S(SᵀU)
    let utu = u.tr_mul(u);
    let stu = star.tr_mul(u);
    let mut f = star * stu;
    f.gemm(-1.0, u, &utu, 1.0);
    f * scale
}

fn rk4_step(u: &DMatrix<f64>, star: &DMatrix<f64>, scale: f64, h: f64) -> DMatrix<f64> {
    let k1 = field(u, star, scale);
    let k2 = field(&(u + &k1 * (h / 2.0)), star, scale);
    let k3 = field(&(u + &k2 * (h / 2.0)), star, scale);
    let k4 = field(&(u + &k3 * h), star, scale);
    u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// `T₀ = −½ (log ‖r(0)‖² − 1) / (1 − ‖E(0)‖_F²)`.
pub fn t0(r0_norm_sq: f64, e0_norm_sq: f64) -> Option<f64> {
    (r0_norm_sq > 0.0 && e0_norm_sq < 1.0).then(|| -0.5 * (r0_norm_sq.ln() - 1.0) / (1.0 - e0_norm_sq))
}

/// Integrates the population gradient flow with RK4 and step-doubling error
/// control from `u0` up to `t_end`.
pub fn gradient_flow(star: &GroundTruth, u0: &FactorMatrix, t_end: f64, config: &FlowConfig) -> Result<FlowTrace> {
    if u0.rows() != star.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial factor has {} rows, ground truth has {}",
            u0.rows(),
            star.dim()
        )));
    }
    if !(t_end >= 0.0) || !(config.snapshot_every > 0.0) || !(config.rel_tol > 0.0) {
        return Err(Error::InvalidArgument(
            "flow needs t_end ≥ 0, positive snapshot spacing and tolerance".into(),
        ));
    }
    let s = star.factor().matrix();
    let scale = config.scale.factor();
    let u_star = (star.rank() == 1).then(|| s.column(0).normalize());

    let snapshot = |t: f64, u: &DMatrix<f64>| -> Result<FlowSnapshot> {
        Ok(FlowSnapshot {
            t,
            column_norms: column_norms(u),
            gram_error: gram_error(u, star)?,
            field_norm: field(u, s, scale).norm(),
            split: u_star.as_ref().map(|v| SignalSplit::compute(u, v)),
        })
    };

    let mut u = u0.matrix().clone();
    let first = snapshot(0.0, &u)?;
    let (t0_value, r0) = match &first.split {
        Some(sp) => {
            let r0: Vec<f64> = u.tr_mul(u_star.as_ref().expect("rank one")).iter().copied().collect();
            (t0(sp.r_norm.powi(2), sp.e_norm.powi(2)), Some(r0))
        }
        None => (None, None),
    };
    let mut snapshots = vec![first];
    let mut t = 0.0;
    let mut h = config.initial_step.min(config.max_step);
    let mut next_snap = config.snapshot_every;
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut converged = false;
    let star_norm = (s * s.transpose()).norm();

    while t < t_end {
        if let Some(stop) = config.stop_grad_norm {
            let residual = (&u * u.transpose() - s * s.transpose()).norm();
            if residual < 0.5 * star_norm && field(&u, s, 4.0).norm() < stop {
                if snapshots.last().map(|sn| sn.t) != Some(t) {
                    snapshots.push(snapshot(t, &u)?);
                }
                converged = true;
                break;
            }
        }
        if steps >= config.max_steps {
            return Err(Error::NonConvergence {
                method: "gradient flow",
                iterations: steps,
            });
        }
        let target = next_snap.min(t_end);
        let h_try = h.min(target - t);
        let full = rk4_step(&u, s, scale, h_try);
        let half = rk4_step(&u, s, scale, h_try / 2.0);
        let two_half = rk4_step(&half, s, scale, h_try / 2.0);
        let err = (&two_half - &full).norm() / 15.0;
        let tol = config.rel_tol * two_half.norm().max(1e-300);
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        if err <= tol {
            u = two_half;
            t += h_try;
            steps += 1;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("flow state at t = {t}")));
            }
            if (t - target).abs() <= 1e-12 * target.max(1.0) {
                t = target;
                snapshots.push(snapshot(t, &u)?);
                next_snap += config.snapshot_every;
            }
            // A step clipped by the snapshot grid says nothing about the
            // next admissible size.
            if h_try == h || factor < 1.0 {
                h = (h_try * factor).min(config.max_step);
            }
        } else {
            rejected += 1;
            h = h_try * factor;
            if h < config.min_step {
                return Err(Error::StepUnderflow { time: t });
            }
        }
    }
    Ok(FlowTrace {
        snapshots,
        t0: t0_value,
        r0,
        final_u: FactorMatrix::new(u)?,
        steps,
        rejected_steps: rejected,
        converged,
    })
}

impl FlowTrace {
    /// Largest increase of `‖E(t)‖_F` between consecutive snapshots.
    pub fn max_noise_increase(&self) -> Option<f64> {
        let norms: Vec<f64> = self
            .snapshots
            .iter()
            .map(|s| s.split.as_ref().map(|sp| sp.e_norm))
            .collect::<Option<_>>()?;
        Some(
            norms
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0),
        )
    }

    pub fn max_reconstruction_error(&self) -> Option<f64> {
        self.snapshots
            .iter()
            .map(|s| s.split.as_ref().map(|sp| sp.reconstruction_error))
            .try_fold(0.0_f64, |acc, v| v.map(|v| acc.max(v)))
    }

    pub fn last(&self) -> &FlowSnapshot {
        self.snapshots.last().expect("trace holds the initial snapshot")
    }
}
