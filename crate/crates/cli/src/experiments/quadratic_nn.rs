//! Quadratic-activation network trained through rank-one sensing, with an
//! ablation of the norm-correction term.

use anyhow::{bail, Result};
use lassoprune::pipeline::{
    build_instance, run_pipeline_on, FineTuneConfig, PipelineConfig, ProblemConfig, ProblemMode,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_echo, seed_list, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;
use crate::stats::{mean, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticNnConfig {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    /// `None` means `30 d r`.
    pub n: Option<usize>,
    pub sigma_r_star: f64,
    pub noise_sigma: f64,
    pub seeds: usize,
    /// Use the true `‖U⋆‖_F²` in the correction term instead of `mean(y)`.
    pub known_fro_star: bool,
    pub train_step: f64,
    pub train_max_iters: usize,
    pub fine_tune_step: f64,
    pub fine_tune_iters: usize,
    pub certify: bool,
    pub ablation: bool,
    /// A seed succeeds with exactly `r` survivors and post-prune gram error
    /// at most this.
    pub gram_tolerance: f64,
}

impl Default for QuadraticNnConfig {
    fn default() -> Self {
        Self {
            d: 20,
            r: 2,
            k: 10,
            n: None,
            sigma_r_star: 0.5,
            noise_sigma: 0.0,
            seeds: 5,
            known_fro_star: true,
            train_step: 0.005,
            train_max_iters: 200_000,
            fine_tune_step: 0.01,
            fine_tune_iters: 20_000,
            certify: true,
            ablation: true,
            gram_tolerance: 0.125,
        }
    }
}

impl QuadraticNnConfig {
    pub fn samples(&self) -> usize {
        self.n.unwrap_or(30 * self.d * self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub variant: String,
    pub surviving_columns: Option<usize>,
    pub gram_error_after_prune: Option<f64>,
    pub gram_error_after_finetune: Option<f64>,
    pub certified: Option<bool>,
    pub success: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FroRow {
    pub seed: u64,
    pub fro_star: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticNnReport {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub successes: usize,
    pub ablation_successes: Option<usize>,
    pub estimates_within_3se: usize,
    pub runs: Vec<RunRow>,
    pub fro_estimates: Vec<FroRow>,
}

fn pipeline_config(cfg: &QuadraticNnConfig, correction: bool, seed: u64) -> PipelineConfig {
    let mut pc = PipelineConfig {
        problem: ProblemConfig {
            d: cfg.d,
            k: cfg.k,
            r: cfg.r,
            sigma_r_star: cfg.sigma_r_star,
            noise_sigma: cfg.noise_sigma,
            mode: ProblemMode::QuadraticNetwork {
                n: cfg.samples(),
                correction,
                known_fro_star: cfg.known_fro_star,
            },
        },
        fine_tune: FineTuneConfig {
            max_iters: cfg.fine_tune_iters,
            step_size: Some(cfg.fine_tune_step),
            ..FineTuneConfig::default()
        },
        certify: cfg.certify,
        seed,
        ..PipelineConfig::default()
    };
    pc.train.step_size = cfg.train_step;
    pc.train.max_iters = cfg.train_max_iters;
    pc
}

fn run_variant(cfg: &QuadraticNnConfig, correction: bool, seed: u64) -> Result<RunRow> {
    let pc = pipeline_config(cfg, correction, seed);
    let instance = build_instance(&pc.problem, seed)?;
    let variant = if correction { "corrected" } else { "no-correction" }.to_string();
    Ok(match run_pipeline_on(&pc, &instance) {
        Ok(run) => {
            let rep = run.report;
            RunRow {
                seed,
                variant,
                surviving_columns: Some(rep.surviving_columns),
                gram_error_after_prune: Some(rep.gram_error_after_prune),
                gram_error_after_finetune: Some(rep.gram_error_after_finetune),
                certified: rep.sosp.as_ref().map(|s| s.certified()),
                success: rep.surviving_columns == cfg.r && rep.gram_error_after_prune <= cfg.gram_tolerance,
                error: None,
            }
        }
        Err(e) => RunRow {
            seed,
            variant,
            surviving_columns: None,
            gram_error_after_prune: None,
            gram_error_after_finetune: None,
            certified: None,
            success: false,
            error: Some(e.to_string()),
        },
    })
}

fn fro_estimate(cfg: &QuadraticNnConfig, seed: u64) -> Result<FroRow> {
    let pc = pipeline_config(cfg, true, seed);
    let instance = build_instance(&pc.problem, seed)?;
    let y: Vec<f64> = instance
        .sensing
        .as_ref()
        .and_then(|s| s.observations())
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default();
    if y.len() < 2 {
        bail!("need at least two observations");
    }
    let fro_star = instance.star.frobenius_sq();
    let estimate = mean(&y);
    let std_error = std_dev(&y) / (y.len() as f64).sqrt();
    let z = (estimate - fro_star) / std_error;
    Ok(FroRow {
        seed,
        fro_star,
        estimate,
        std_error,
        z,
        within_3se: z.abs() <= 3.0,
    })
}

pub fn compute(cfg: &QuadraticNnConfig, base_seed: u64) -> Result<QuadraticNnReport> {
    if cfg.seeds == 0 {
        bail!("seeds must be positive");
    }
    let seeds = seed_list(base_seed, cfg.seeds);
    let mut jobs: Vec<(bool, u64)> = seeds.iter().map(|&s| (true, s)).collect();
    if cfg.ablation {
        jobs.extend(seeds.iter().map(|&s| (false, s)));
    }
    let runs = jobs
        .par_iter()
        .map(|&(c, s)| run_variant(cfg, c, s))
        .collect::<Result<Vec<_>>>()?;
    let fro_estimates = seeds
        .iter()
        .map(|&s| fro_estimate(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let count = |variant: &str| runs.iter().filter(|r| r.variant == variant && r.success).count();
    Ok(QuadraticNnReport {
        n: cfg.samples(),
        successes: count("corrected"),
        ablation_successes: cfg.ablation.then(|| count("no-correction")),
        estimates_within_3se: fro_estimates.iter().filter(|f| f.within_3se).count(),
        seeds,
        runs,
        fro_estimates,
    })
}

pub fn write(report: &QuadraticNnReport, out: &mut OutputDir) -> Result<()> {
    out.write_csv("quadratic_nn.csv", &report.runs)?;
    out.write_csv("fro_estimate.csv", &report.fro_estimates)?;
    out.write_json("report.json", report)?;
    Ok(())
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, QuadraticNnConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let report = compute(&cfg, common.seed)?;
    write(&report, &mut out)?;
    println!(
        "quadratic-nn: n {}; {}/{} seeds recover {} neurons; ablation {}; F estimates within 3 SE {}/{}",
        report.n,
        report.successes,
        report.seeds.len(),
        cfg.r,
        report
            .ablation_successes
            .map_or("-".into(), |a| format!("{a}/{}", report.seeds.len())),
        report.estimates_within_3se,
        report.seeds.len(),
    );
    out.finish("quadratic-nn", config_echo(&common, &cfg)?, report.seeds.clone())?;
    Ok(0)
}
