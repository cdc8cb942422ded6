use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, capped_svd, column_summary, gram_error, op_norm, FactorMatrix, GroundTruth};
use crate::objectives::Objective;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Perturbation {
    None,
    /// Uniform in the Frobenius ball of this radius (at most 1).
    UniformBall {
        radius: f64,
    },
    /// i.i.d. `N(0, scale²)` entries.
    Gaussian {
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PerturbTrigger {
    Always,
    /// Perturb when the gradient norm is at most `threshold`, no more than once
    /// every `interval` iterations.
    OnSmallGradient {
        threshold: f64,
        interval: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub perturbation: Perturbation,
    pub trigger: PerturbTrigger,
    /// Stop once the gradient norm is at most this value (after any pending
    /// escape attempt).
    pub grad_tol: Option<f64>,
    /// Hard failure when an iterate's operator norm exceeds this bound.
    pub op_norm_guard: Option<f64>,
    /// Clip perturbations to `‖P‖_op ≤ 1`.
    pub project_perturbation: bool,
    /// An escape attempt counts as failed (and the run stops) when the
    /// objective dropped by less than this over the escape interval.
    pub escape_decrease: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_iters: 10_000,
            perturbation: Perturbation::None,
            trigger: PerturbTrigger::Always,
            grad_tol: None,
            op_norm_guard: Some(3.0),
            project_perturbation: true,
            escape_decrease: 1e-12,
        }
    }
}

impl GdConfig {
    /// Saddle-escape defaults: uniform-ball noise only when the gradient is
    /// small, at most once per `interval` steps.
    pub fn saddle_escape(step_size: f64, max_iters: usize, grad_tol: f64, radius: f64, interval: usize) -> Self {
        Self {
            step_size,
            max_iters,
            perturbation: Perturbation::UniformBall { radius },
            trigger: PerturbTrigger::OnSmallGradient {
                threshold: grad_tol,
                interval,
            },
            grad_tol: Some(grad_tol),
            ..Self::default()
        }
    }
}

/// What a trace sink sees at each iteration, before the update.
pub struct IterState<'a> {
    pub iter: usize,
    pub u: &'a DMatrix<f64>,
    pub grad_norm: f64,
    pub objective: &'a Objective,
    pub last: bool,
}

pub trait TraceSink {
    fn observe(&mut self, state: &IterState<'_>) -> Result<()>;
}

pub struct NullSink;

impl TraceSink for NullSink {
    fn observe(&mut self, _: &IterState<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub op_norm: f64,
    pub min_col_norm: f64,
    pub max_col_norm: f64,
    pub gram_error: Option<f64>,
}

/// Records every `stride`-th iteration plus the final one.
#[derive(Debug, Clone)]
pub struct TraceRecorder {
    stride: usize,
    reference: Option<GroundTruth>,
    offset: usize,
    pub records: Vec<IterRecord>,
}

impl TraceRecorder {
    pub fn new(stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            reference: None,
            offset: 0,
            records: Vec::new(),
        }
    }

    /// Also record `‖UUᵀ − U⋆U⋆ᵀ‖_F` against this reference.
    pub fn with_reference(mut self, star: GroundTruth) -> Self {
        self.reference = Some(star);
        self
    }

    /// Shift recorded iteration numbers, for traces that continue a run.
    pub fn with_offset(mut self, offset: usize) -> Self {
        self.offset = offset;
        self
    }
}

impl TraceSink for TraceRecorder {
    fn observe(&mut self, state: &IterState<'_>) -> Result<()> {
        if !state.iter.is_multiple_of(self.stride) && !state.last {
            return Ok(());
        }
        if state.last && self.records.last().map(|r| r.iter) == Some(state.iter + self.offset) {
            return Ok(());
        }
        let cols = column_summary(state.u);
        let gram = match &self.reference {
            Some(star) => Some(gram_error(state.u, star)?),
            None => None,
        };
        self.records.push(IterRecord {
            iter: state.iter + self.offset,
            loss: state.objective.value(state.u)?,
            grad_norm: state.grad_norm,
            op_norm: op_norm(state.u)?,
            min_col_norm: cols.min,
            max_col_norm: cols.max,
            gram_error: gram,
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub u: FactorMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub perturbations: usize,
}

fn draw_perturbation(
    kind: Perturbation,
    rows: usize,
    cols: usize,
    project: bool,
    rng: &mut SeededRng,
) -> Option<DMatrix<f64>> {
    let mut p = match kind {
        Perturbation::None => return None,
        Perturbation::UniformBall { radius } => rng.uniform_ball(rows, cols, radius),
        Perturbation::Gaussian { scale } => rng.normal_matrix(rows, cols, scale),
    };
    if project {
        clip_operator_norm(&mut p, 1.0);
    }
    Some(p)
}

/// Clips singular values at `bound`.
pub fn clip_operator_norm(p: &mut DMatrix<f64>, bound: f64) {
    // ‖P‖_op ≤ ‖P‖_F, so most draws skip the SVD.
    if p.norm() <= bound {
        return;
    }
    let Some(svd) = capped_svd(p, true) else {
        // Frobenius rescaling also enforces the bound.
        *p *= bound / p.norm();
        return;
    };
    if svd.singular_values.max() <= bound {
        return;
    }
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let clipped = svd.singular_values.map(|s| s.min(bound));
    *p = u * DMatrix::from_diagonal(&clipped) * vt;
}

/// `U_{t+1} = U_t − α(∇f(U_t) + P_t)`.
pub fn perturbed_gd(
    objective: &Objective,
    u0: &FactorMatrix,
    config: &GdConfig,
    rng: &mut SeededRng,
    sink: &mut dyn TraceSink,
) -> Result<GdOutcome> {
    if !(config.step_size > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let (rows, cols) = (u0.rows(), u0.cols());
    let mut u = u0.matrix().clone();
    let mut last_escape: Option<(usize, f64)> = None;
    let mut perturbations = 0;
    let escape_trigger = match (config.perturbation, config.trigger) {
        (Perturbation::None, _) => None,
        (_, PerturbTrigger::OnSmallGradient { threshold, interval }) => Some((threshold, interval)),
        (_, PerturbTrigger::Always) => None,
    };

    for iter in 0..config.max_iters {
        if let Some(bound) = config.op_norm_guard.filter(|&b| u.norm() > b) {
            let norm = op_norm(&u)?;
            if norm > bound {
                return Err(Error::GuardViolation {
                    iteration: iter,
                    op_norm: norm,
                    bound,
                });
            }
        }
        let grad = objective.gradient(&u)?;
        let grad_norm = grad.norm();
        sink.observe(&IterState {
            iter,
            u: &u,
            grad_norm,
            objective,
            last: false,
        })?;

        let small = config.grad_tol.is_some_and(|tol| grad_norm <= tol);
        let mut step_noise = None;
        match escape_trigger {
            Some((threshold, interval)) => {
                if grad_norm <= threshold {
                    match last_escape {
                        Some((at, _)) if iter - at < interval => {}
                        Some((_, before)) if small => {
                            let now = objective.value(&u)?;
                            if now > before - config.escape_decrease {
                                return finish(objective, u, iter, true, grad_norm, perturbations, sink);
                            }
                            last_escape = Some((iter, now));
                            step_noise =
                                draw_perturbation(config.perturbation, rows, cols, config.project_perturbation, rng);
                        }
                        _ => {
                            last_escape = Some((iter, objective.value(&u)?));
                            step_noise =
                                draw_perturbation(config.perturbation, rows, cols, config.project_perturbation, rng);
                        }
                    }
                }
            }
            None => {
                if small {
                    return finish(objective, u, iter, true, grad_norm, perturbations, sink);
                }
                if config.trigger == PerturbTrigger::Always {
                    step_noise = draw_perturbation(config.perturbation, rows, cols, config.project_perturbation, rng);
                }
            }
        }

        axpy(&mut u, -config.step_size, &grad);
        if let Some(p) = step_noise {
            perturbations += 1;
            axpy(&mut u, -config.step_size, &p);
        }
        if let Some(bad) = u.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "iterate {} contains {bad} (last gradient norm {grad_norm:e}, step {})",
                iter + 1,
                config.step_size
            )));
        }
    }
    if let Some(bound) = config.op_norm_guard {
        let norm = op_norm(&u)?;
        if norm > bound {
            return Err(Error::GuardViolation {
                iteration: config.max_iters,
                op_norm: norm,
                bound,
            });
        }
    }
    let grad_norm_final = objective.gradient(&u)?.norm();
    let converged = config.grad_tol.is_some_and(|tol| grad_norm_final <= tol) && escape_trigger.is_none();
    finish(
        objective,
        u,
        config.max_iters,
        converged,
        grad_norm_final,
        perturbations,
        sink,
    )
}

fn finish(
    objective: &Objective,
    u: DMatrix<f64>,
    iterations: usize,
    converged: bool,
    final_grad_norm: f64,
    perturbations: usize,
    sink: &mut dyn TraceSink,
) -> Result<GdOutcome> {
    sink.observe(&IterState {
        iter: iterations,
        u: &u,
        grad_norm: final_grad_norm,
        objective,
        last: true,
    })?;
    Ok(GdOutcome {
        u: FactorMatrix::new(u)?,
        iterations,
        converged,
        final_grad_norm,
        perturbations,
    })
}
