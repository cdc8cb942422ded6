//! Regularized training, greedy column pruning and fine-tuning, end to end.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_norms, gram_error, max_abs_offdiag_cosine, FactorMatrix, GroundTruth};
use crate::objectives::{Objective, RegParams};
use crate::rng::SeededRng;
use crate::sensing::{
    gen_gaussian_sensing, gen_ground_truth, gen_rank_one_sensing, measure, GaussianScale, SensingSet,
};
use crate::solver::{certify_sosp, perturbed_gd, EigenConfig, GdConfig, IterRecord, SospReport, TraceRecorder};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Multipliers for the parameter formulas in [`default_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_beta: f64,
    pub c_lambda: f64,
    pub c_gamma: f64,
    pub c_epsilon: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_beta: 0.05,
            c_lambda: 1.0,
            c_gamma: 0.1,
            c_epsilon: 0.1,
        }
    }
}

/// `β = c_β σ²/r`, `λ = c_λ σ³/√(kr)`, `γ = c_γ σ³/(√k r^{5/2})`,
/// `ε = c_ε σ^{7/2}/(√k r^{5/2})` with `σ = σ_r⋆`.
pub fn default_params(sigma_r_star: f64, r: usize, k: usize, c: &Constants) -> Result<RegParams> {
    if !(sigma_r_star > 0.0) || r == 0 || k == 0 {
        return Err(Error::InvalidArgument("parameters need σ_r⋆ > 0, r ≥ 1, k ≥ 1".into()));
    }
    let (s, r, k) = (sigma_r_star, r as f64, k as f64);
    let beta = c.c_beta * s * s / r;
    let lambda = c.c_lambda * s.powi(3) / (k * r).sqrt();
    let gamma = c.c_gamma * s.powi(3) / (k.sqrt() * r.powf(2.5));
    let epsilon = c.c_epsilon * s.powf(3.5) / (k.sqrt() * r.powf(2.5));
    RegParams::new(lambda, beta, epsilon, gamma)
}

#[derive(Debug, Clone)]
pub struct PruneResult {
    /// `None` when every column was at or below the threshold.
    pub pruned: Option<FactorMatrix>,
    pub kept_indices: Vec<usize>,
    pub pruned_indices: Vec<usize>,
    pub threshold: f64,
    pub column_norms: Vec<f64>,
}

/// Keeps the columns with norm strictly above `2√β`, in order.
pub fn greedy_prune(u: &FactorMatrix, beta: f64) -> Result<PruneResult> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("pruning needs β > 0, got {beta}")));
    }
    let threshold = 2.0 * beta.sqrt();
    let norms = column_norms(u);
    let (kept, pruned): (Vec<usize>, Vec<usize>) = (0..u.cols()).partition(|&i| norms[i] > threshold);
    let matrix = if kept.is_empty() {
        None
    } else {
        Some(u.select_columns(&kept)?)
    };
    Ok(PruneResult {
        pruned: matrix,
        kept_indices: kept,
        pruned_indices: pruned,
        threshold,
        column_norms: norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub max_iters: usize,
    /// `None` means `0.1 / σ₁⋆²`.
    pub step_size: Option<f64>,
    pub max_retries: usize,
    /// Consecutive loss increases that count as divergence.
    pub divergence_window: usize,
    /// Stop once the data loss is at most this.
    pub loss_tol: Option<f64>,
    pub trace_stride: usize,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_size: None,
            max_retries: 5,
            divergence_window: 50,
            loss_tol: None,
            trace_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub iter: usize,
    pub loss: f64,
    pub gram_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub u: FactorMatrix,
    pub iterations: usize,
    pub step_size: f64,
    pub retries: usize,
    pub final_loss: f64,
    pub trace: Vec<FineTuneRecord>,
}

fn fine_tune_once(
    u0: &FactorMatrix,
    objective: &Objective,
    config: &FineTuneConfig,
    step: f64,
    reference: Option<&GroundTruth>,
) -> Result<FineTuneOutcome> {
    let mut u = u0.matrix().clone();
    let mut trace = Vec::new();
    let mut loss = objective.value(&u)?;
    let mut increases = 0;
    let stride = config.trace_stride.max(1);
    let record = |iter: usize, u: &DMatrix<f64>, loss: f64, trace: &mut Vec<FineTuneRecord>| -> Result<()> {
        trace.push(FineTuneRecord {
            iter,
            loss,
            gram_error: reference.map(|s| gram_error(u, s)).transpose()?,
        });
        Ok(())
    };
    record(0, &u, loss, &mut trace)?;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        if config.loss_tol.is_some_and(|tol| loss <= tol) {
            break;
        }
        let grad = objective.gradient(&u)?;
        u -= grad * step;
        let next = objective.value(&u)?;
        if !next.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                steps: iter,
                step_size: step,
            });
        }
        increases = if next > loss { increases + 1 } else { 0 };
        if increases >= config.divergence_window {
            return Err(Error::Divergence {
                steps: increases,
                step_size: step,
            });
        }
        loss = next;
        iterations = iter;
        if iter % stride == 0 {
            record(iter, &u, loss, &mut trace)?;
        }
    }
    // Oscillation that never trips the window but ends above the start.
    if loss > trace[0].loss {
        return Err(Error::Divergence {
            steps: iterations,
            step_size: step,
        });
    }
    if trace.last().map(|r| r.iter) != Some(iterations) {
        record(iterations, &u, loss, &mut trace)?;
    }
    Ok(FineTuneOutcome {
        u: FactorMatrix::new(u)?,
        iterations,
        step_size: step,
        retries: 0,
        final_loss: loss,
        trace,
    })
}

/// Plain gradient descent on `objective`, halving the step and restarting on
/// divergence up to `max_retries` times.
pub fn fine_tune(
    u_prune: &FactorMatrix,
    objective: &Objective,
    config: &FineTuneConfig,
    step_size: f64,
    reference: Option<&GroundTruth>,
) -> Result<FineTuneOutcome> {
    if !(step_size > 0.0) {
        return Err(Error::InvalidArgument("fine-tune step must be positive".into()));
    }
    let mut step = step_size;
    let mut retries = 0;
    loop {
        match fine_tune_once(u_prune, objective, config, step, reference) {
            Ok(mut out) => {
                out.retries = retries;
                return Ok(out);
            }
            Err(Error::Divergence { .. }) if retries < config.max_retries => {
                retries += 1;
                step /= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ProblemMode {
    Population,
    /// Dense Gaussian measurements.
    Empirical {
        n: usize,
    },
    /// Rank-one measurements `x_i x_iᵀ`.
    QuadraticNetwork {
        n: usize,
        /// Keep the `−(‖U‖² − ‖U⋆‖²)²` term.
        correction: bool,
        /// Use the true `‖U⋆‖_F²` instead of the mean-label estimate.
        known_fro_star: bool,
    },
}

impl ProblemMode {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemMode::Population => "population",
            ProblemMode::Empirical { .. } => "empirical",
            ProblemMode::QuadraticNetwork { .. } => "quadratic-network",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub sigma_r_star: f64,
    pub noise_sigma: f64,
    pub mode: ProblemMode,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            d: 20,
            k: 20,
            r: 3,
            sigma_r_star: 0.5,
            noise_sigma: 0.0,
            mode: ProblemMode::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub problem: ProblemConfig,
    pub constants: Constants,
    /// Replaces the formula value of λ (β, ε, γ unchanged).
    pub lambda_override: Option<f64>,
    pub train: GdConfig,
    pub fine_tune: FineTuneConfig,
    /// Standard deviation of the initial entries; `None` means `0.1/√d`.
    pub init_scale: Option<f64>,
    pub eigen: EigenConfig,
    pub certify: bool,
    pub train_trace_stride: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            constants: Constants::default(),
            lambda_override: None,
            train: GdConfig::saddle_escape(0.05, 200_000, 0.0, 1e-2, 500),
            fine_tune: FineTuneConfig::default(),
            init_scale: None,
            eigen: EigenConfig::default(),
            certify: true,
            train_trace_stride: 100,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn params(&self) -> Result<RegParams> {
        let p = &self.problem;
        let mut params = default_params(p.sigma_r_star, p.r, p.k, &self.constants)?;
        if let Some(lambda) = self.lambda_override {
            params = RegParams::new(lambda, params.beta, params.epsilon, params.gamma)?;
        }
        Ok(params)
    }

    /// Training configuration with the gradient tolerance set to ε.
    fn train_config(&self, params: &RegParams) -> GdConfig {
        let mut cfg = self.train;
        cfg.grad_tol = Some(params.epsilon);
        cfg.escape_decrease = cfg.escape_decrease.max(params.epsilon * params.epsilon);
        if let crate::solver::PerturbTrigger::OnSmallGradient { interval, .. } = cfg.trigger {
            cfg.trigger = crate::solver::PerturbTrigger::OnSmallGradient {
                threshold: params.epsilon,
                interval,
            };
        }
        cfg
    }
}

/// Ground truth plus (for the sampled modes) the measured sensing set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub star: GroundTruth,
    pub sensing: Option<SensingSet>,
}

mod streams {
    pub const TRUTH: u64 = 0;
    pub const SENSING: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PERTURB: u64 = 4;
    pub const CERTIFY: u64 = 5;
}

pub fn build_instance(problem: &ProblemConfig, seed: u64) -> Result<Instance> {
    let root = SeededRng::new(seed);
    let star = gen_ground_truth(
        problem.d,
        problem.r,
        problem.sigma_r_star,
        &mut root.substream(streams::TRUTH),
    )?;
    let raw = match problem.mode {
        ProblemMode::Population => None,
        ProblemMode::Empirical { n } => Some(gen_gaussian_sensing(
            n,
            problem.d,
            GaussianScale::Isotropic,
            &mut root.substream(streams::SENSING),
        )?),
        ProblemMode::QuadraticNetwork { n, .. } => Some(gen_rank_one_sensing(
            n,
            problem.d,
            &mut root.substream(streams::SENSING),
        )?),
    };
    let sensing = raw
        .map(|s| measure(&star, &s, problem.noise_sigma, &mut root.substream(streams::NOISE)))
        .transpose()?;
    Ok(Instance { star, sensing })
}

/// Initial factor with i.i.d. `N(0, scale²)` entries.
pub fn initial_factor(problem: &ProblemConfig, scale: Option<f64>, seed: u64) -> Result<FactorMatrix> {
    let scale = scale.unwrap_or(0.1 / (problem.d as f64).sqrt());
    let mut rng = SeededRng::new(seed).substream(streams::INIT);
    FactorMatrix::new(rng.normal_matrix(problem.d, problem.k, scale))
}

/// The unregularized training objective of `instance` under `mode`.
pub fn data_objective(mode: &ProblemMode, instance: &Instance) -> Result<Objective> {
    Ok(match (mode, &instance.sensing) {
        (ProblemMode::Population, _) => Objective::population(instance.star.clone()),
        (ProblemMode::Empirical { .. }, Some(s)) => Objective::empirical(s.clone())?,
        (
            ProblemMode::QuadraticNetwork {
                correction,
                known_fro_star,
                ..
            },
            Some(s),
        ) => {
            let fro = known_fro_star.then(|| instance.star.frobenius_sq());
            let obj = Objective::quadratic_network(s.clone(), fro)?;
            if *correction {
                obj
            } else {
                obj.without_correction()
            }
        }
        _ => return Err(Error::InvalidArgument("sampled mode without a sensing set".into())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeFlags {
    pub lambda_le_beta: bool,
    pub lambda_le_sqrt_beta: bool,
    pub lambda_overridden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub final_value: f64,
    pub perturbations: usize,
    pub trace: Vec<IterRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub threshold: f64,
    pub column_norms: Vec<f64>,
    pub kept_indices: Vec<usize>,
    pub pruned_indices: Vec<usize>,
    /// `‖U_prune U_pruneᵀ − UUᵀ‖_F`.
    pub identity_lhs: f64,
    /// `Σ_{pruned} ‖Ue_i‖²`.
    pub identity_rhs: f64,
    pub identity_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSummary {
    pub iterations: usize,
    pub step_size: f64,
    pub retries: usize,
    pub final_loss: f64,
    pub trace: Vec<FineTuneRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub train_s: f64,
    pub certify_s: f64,
    pub prune_s: f64,
    pub fine_tune_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub mode: String,
    pub seed: u64,
    pub problem: ProblemConfig,
    pub params: RegParams,
    pub regime: RegimeFlags,
    pub train: TrainSummary,
    pub sosp: Option<SospReport>,
    pub prune: PruneSummary,
    pub surviving_columns: usize,
    pub gram_error_before_prune: f64,
    pub gram_error_after_prune: f64,
    pub gram_error_after_finetune: f64,
    pub max_surviving_cosine: f64,
    pub fine_tune: FineTuneSummary,
    pub timings: PhaseTimings,
}

/// Report plus the factors at each phase boundary.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub trained: FactorMatrix,
    pub pruned: FactorMatrix,
    pub fine_tuned: FactorMatrix,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let instance = build_instance(&config.problem, config.seed)?;
    Ok(run_pipeline_on(config, &instance)?.report)
}

/// Runs train, certify, prune and fine-tune on a prebuilt instance.
pub fn run_pipeline_on(config: &PipelineConfig, instance: &Instance) -> Result<PipelineRun> {
    let params = config.params()?;
    let base = data_objective(&config.problem.mode, instance)?;
    let objective = base.clone().with_regularizer(params.lambda, params.beta);
    let star = &instance.star;
    let root = SeededRng::new(config.seed);
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let u0 = initial_factor(&config.problem, config.init_scale, config.seed)?;
    let mut recorder = TraceRecorder::new(config.train_trace_stride).with_reference(star.clone());
    let trained = perturbed_gd(
        &objective,
        &u0,
        &config.train_config(&params),
        &mut root.substream(streams::PERTURB),
        &mut recorder,
    )
    .map_err(|e| e.in_phase("train"))?;
    let final_value = objective.value(&trained.u).map_err(|e| e.in_phase("train"))?;
    timings.train_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let sosp = if config.certify {
        let eigen = EigenConfig {
            seed: root.substream(streams::CERTIFY).next_u64(),
            ..config.eigen
        };
        Some(certify_sosp(&objective, &trained.u, &params, &eigen).map_err(|e| e.in_phase("certify"))?)
    } else {
        None
    };
    timings.certify_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let prune = greedy_prune(&trained.u, params.beta).map_err(|e| e.in_phase("prune"))?;
    let pruned = prune.pruned.clone().ok_or_else(|| {
        Error::EmptyPrune {
            threshold: prune.threshold,
        }
        .in_phase("prune")
    })?;
    let removed = trained.u.select_columns(&prune.pruned_indices).ok();
    let identity_lhs = removed.as_ref().map_or(0.0, |m| m.tr_mul(m).norm());
    let identity_rhs: f64 = prune
        .pruned_indices
        .iter()
        .map(|&i| prune.column_norms[i].powi(2))
        .sum();
    let gram_before = gram_error(&trained.u, star).map_err(|e| e.in_phase("prune"))?;
    let gram_after_prune = gram_error(&pruned, star).map_err(|e| e.in_phase("prune"))?;
    timings.prune_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let step = config.fine_tune.step_size.unwrap_or(0.1 / star.sigma_one().powi(2));
    let tuned = fine_tune(&pruned, &base, &config.fine_tune, step, Some(star)).map_err(|e| e.in_phase("fine-tune"))?;
    let gram_after_finetune = gram_error(&tuned.u, star).map_err(|e| e.in_phase("fine-tune"))?;
    timings.fine_tune_s = clock.elapsed().as_secs_f64();

    let report = PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: config.problem.mode.name().to_string(),
        seed: config.seed,
        problem: config.problem,
        params,
        regime: RegimeFlags {
            lambda_le_beta: params.lambda <= params.beta,
            lambda_le_sqrt_beta: params.lambda <= params.beta.sqrt(),
            lambda_overridden: config.lambda_override.is_some(),
        },
        train: TrainSummary {
            iterations: trained.iterations,
            converged: trained.converged,
            final_grad_norm: trained.final_grad_norm,
            final_value,
            perturbations: trained.perturbations,
            trace: recorder.records,
        },
        sosp,
        surviving_columns: prune.kept_indices.len(),
        prune: PruneSummary {
            threshold: prune.threshold,
            column_norms: prune.column_norms,
            kept_indices: prune.kept_indices,
            pruned_indices: prune.pruned_indices,
            identity_lhs,
            identity_rhs,
            identity_holds: identity_lhs <= identity_rhs + 1e-9,
        },
        gram_error_before_prune: gram_before,
        gram_error_after_prune: gram_after_prune,
        gram_error_after_finetune: gram_after_finetune,
        max_surviving_cosine: max_abs_offdiag_cosine(&pruned),
        fine_tune: FineTuneSummary {
            iterations: tuned.iterations,
            step_size: tuned.step_size,
            retries: tuned.retries,
            final_loss: tuned.final_loss,
            trace: tuned.trace,
        },
        timings,
    };
    Ok(PipelineRun {
        report,
        trained: trained.u,
        pruned,
        fine_tuned: tuned.u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_constants_give_unit_params() {
        let c = Constants {
            c_beta: 1.0,
            c_lambda: 1.0,
            c_gamma: 1.0,
            c_epsilon: 1.0,
        };
        let p = default_params(1.0, 1, 1, &c).unwrap();
        assert_eq!((p.beta, p.lambda, p.gamma, p.epsilon), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn beta_arithmetic() {
        let c = Constants {
            c_beta: 1.0,
            ..Constants::default()
        };
        let p = default_params(0.5, 3, 20, &c).unwrap();
        assert!((p.beta - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_k_scales_lambda() {
        let c = Constants::default();
        let a = default_params(0.5, 3, 20, &c).unwrap();
        let b = default_params(0.5, 3, 40, &c).unwrap();
        assert!((a.lambda / b.lambda - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(a.beta, b.beta);
    }

    #[test]
    fn prune_threshold_arithmetic() {
        let u = FactorMatrix::new(DMatrix::from_row_slice(1, 4, &[3.0, 0.1, 2.0, 0.05])).unwrap();
        let p = greedy_prune(&u, 0.01).unwrap();
        assert_eq!(p.kept_indices, vec![0, 2]);
        assert_eq!(p.pruned_indices, vec![1, 3]);
        assert_eq!(p.pruned.unwrap().as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn prune_keeps_everything_above_threshold() {
        let u = FactorMatrix::new(DMatrix::from_element(2, 3, 1.0)).unwrap();
        let p = greedy_prune(&u, 0.01).unwrap();
        assert_eq!(p.pruned.unwrap(), u);
    }

    #[test]
    fn prune_boundary_is_inclusive() {
        let beta: f64 = 0.0625;
        let u = FactorMatrix::new(DMatrix::from_row_slice(1, 2, &[2.0 * beta.sqrt(), 1.0])).unwrap();
        let p = greedy_prune(&u, beta).unwrap();
        assert_eq!(p.pruned_indices, vec![0]);
    }

    #[test]
    fn prune_can_empty() {
        let u = FactorMatrix::new(DMatrix::from_element(2, 2, 1e-3)).unwrap();
        let p = greedy_prune(&u, 0.01).unwrap();
        assert!(p.pruned.is_none());
        assert_eq!(p.pruned_indices, vec![0, 1]);
    }

    #[test]
    fn fine_tune_at_optimum_is_stationary() {
        let mut rng = SeededRng::new(3);
        let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
        let obj = Objective::population(star.clone());
        let out = fine_tune(star.factor(), &obj, &FineTuneConfig::default(), 0.1, Some(&star)).unwrap();
        assert!((out.u.matrix() - star.factor().matrix()).norm() < 1e-12);
    }

    #[test]
    fn fine_tune_recovers_from_divergent_step() {
        let mut rng = SeededRng::new(4);
        let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
        let obj = Objective::population(star.clone());
        let start = FactorMatrix::new(star.factor().matrix() + rng.normal_matrix(5, 2, 0.05)).unwrap();
        let cfg = FineTuneConfig {
            max_iters: 500,
            max_retries: 8,
            ..FineTuneConfig::default()
        };
        let out = fine_tune(&start, &obj, &cfg, 4.0, Some(&star)).unwrap();
        assert!(out.retries > 0);
        assert!(out.final_loss.is_finite());
        assert!(out.final_loss <= out.trace[0].loss);
    }

    #[test]
    fn fine_tune_gives_up_after_retries() {
        let mut rng = SeededRng::new(5);
        let star = gen_ground_truth(4, 1, 1.0, &mut rng).unwrap();
        let obj = Objective::population(star.clone());
        let start = FactorMatrix::new(rng.normal_matrix(4, 1, 1.0)).unwrap();
        let cfg = FineTuneConfig {
            max_retries: 1,
            ..FineTuneConfig::default()
        };
        let err = fine_tune(&start, &obj, &cfg, 1e3, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
