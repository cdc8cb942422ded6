//! Vanilla gradient descent against prune-and-fine-tune on empirical loss,
//! plus the noisy error-floor sweep over the sample size.

use anyhow::{anyhow, bail, Result};
use lassoprune::pipeline::{
    build_instance, data_objective, initial_factor, run_pipeline_on, FineTuneConfig, Instance, PipelineConfig,
    PipelineRun, ProblemConfig, ProblemMode,
};
use lassoprune::sensing::{gen_gaussian_sensing, measure, GaussianScale};
use lassoprune::solver::{perturbed_gd, GdConfig, Perturbation, TraceRecorder};
use lassoprune::{Objective, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_echo, seed_list, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;
use crate::plot::{line_chart, LineSpec};
use crate::stats::{log_log_slope, median};

const VALIDATION_STREAM: u64 = 10;
const VALIDATION_NOISE_STREAM: u64 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineCompareConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub sigma_r_star: f64,
    pub n: usize,
    pub noise_sigma: f64,
    pub seeds: usize,
    /// Multipliers of the default λ; the one with the lowest held-out loss wins.
    pub lambda_grid: Vec<f64>,
    pub validation_n: usize,
    pub train_step: f64,
    pub train_max_iters: usize,
    pub fine_tune_iters: usize,
    pub vanilla_step: f64,
    pub trace_stride: usize,
    pub certify: bool,
    /// Fine-tune windows must shrink the gram error by `rate_factor` every
    /// `rate_window` iterations until it is below `rate_target`.
    pub rate_window: usize,
    pub rate_factor: f64,
    pub rate_target: f64,
    pub sweep: bool,
    pub sweep_ns: Vec<usize>,
    pub sweep_sigma: f64,
    pub sweep_lambda_grid: Vec<f64>,
}

impl Default for PipelineCompareConfig {
    fn default() -> Self {
        Self {
            d: 20,
            k: 20,
            r: 3,
            sigma_r_star: 0.5,
            n: 100,
            noise_sigma: 0.0,
            seeds: 5,
            lambda_grid: vec![0.5, 1.0, 2.0],
            validation_n: 200,
            train_step: 0.05,
            train_max_iters: 200_000,
            fine_tune_iters: 2000,
            vanilla_step: 0.05,
            trace_stride: 10,
            certify: false,
            rate_window: 200,
            rate_factor: 10.0,
            rate_target: 1e-8,
            sweep: true,
            sweep_ns: vec![250, 1000, 4000],
            sweep_sigma: 0.1,
            sweep_lambda_grid: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub n: usize,
    pub seed: u64,
    pub multiplier: f64,
    pub lambda: f64,
    pub validation_loss: Option<f64>,
    pub surviving_columns: Option<usize>,
    pub gram_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub method: String,
    pub iter: usize,
    pub gram_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub multiplier: f64,
    pub lambda: f64,
    pub surviving_columns: usize,
    pub budget: usize,
    pub prune_iteration: usize,
    pub pipeline_floor: f64,
    pub vanilla_floor: f64,
    /// Largest `g(i + window) / g(i)` over fine-tune windows starting above
    /// the target.
    pub worst_window_ratio: f64,
    pub reached_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub multiplier: f64,
    pub surviving_columns: usize,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub n: usize,
    pub median_floor: f64,
    /// `σ √(r d / n)`.
    pub reference_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sigma: f64,
    pub points: Vec<SweepSummary>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCompareReport {
    pub seeds: Vec<u64>,
    pub default_lambda: f64,
    pub per_seed: Vec<SeedSummary>,
    pub median_pipeline_floor: f64,
    pub median_vanilla_floor: f64,
    /// Median vanilla floor over median pipeline floor.
    pub floor_ratio: f64,
    pub fine_tune_rate_holds: bool,
    pub sweep: Option<SweepReport>,
}

pub struct PipelineCompareOutcome {
    pub report: PipelineCompareReport,
    pub traces: Vec<TraceRow>,
    pub lambda_rows: Vec<LambdaRow>,
    pub sweep_rows: Vec<SweepRow>,
}

fn pipeline_config(cfg: &PipelineCompareConfig, n: usize, sigma: f64, seed: u64) -> PipelineConfig {
    let problem = ProblemConfig {
        d: cfg.d,
        k: cfg.k,
        r: cfg.r,
        sigma_r_star: cfg.sigma_r_star,
        noise_sigma: sigma,
        mode: ProblemMode::Empirical { n },
    };
    let mut pc = PipelineConfig {
        problem,
        fine_tune: FineTuneConfig {
            max_iters: cfg.fine_tune_iters,
            ..FineTuneConfig::default()
        },
        certify: cfg.certify,
        train_trace_stride: cfg.trace_stride,
        seed,
        ..PipelineConfig::default()
    };
    pc.train.step_size = cfg.train_step;
    pc.train.max_iters = cfg.train_max_iters;
    pc
}

fn validation_objective(cfg: &PipelineCompareConfig, instance: &Instance, sigma: f64, seed: u64) -> Result<Objective> {
    let root = SeededRng::new(seed);
    let raw = gen_gaussian_sensing(
        cfg.validation_n,
        cfg.d,
        GaussianScale::Isotropic,
        &mut root.substream(VALIDATION_STREAM),
    )?;
    let held_out = measure(
        &instance.star,
        &raw,
        sigma,
        &mut root.substream(VALIDATION_NOISE_STREAM),
    )?;
    Ok(Objective::empirical(held_out)?)
}

/// Runs the pipeline for each λ multiplier and keeps the run with the lowest
/// held-out loss.
fn select_lambda(
    cfg: &PipelineCompareConfig,
    grid: &[f64],
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<(Instance, f64, PipelineRun, Vec<LambdaRow>)> {
    if grid.is_empty() {
        bail!("lambda grid is empty");
    }
    let base = pipeline_config(cfg, n, sigma, seed);
    let default_lambda = base.params()?.lambda;
    let instance = build_instance(&base.problem, seed)?;
    let validation = validation_objective(cfg, &instance, sigma, seed)?;
    let mut rows = Vec::new();
    let mut best: Option<(f64, f64, PipelineRun)> = None;
    for &m in grid {
        let lambda = default_lambda * m;
        let pc = PipelineConfig {
            lambda_override: Some(lambda),
            ..base.clone()
        };
        let mut row = LambdaRow {
            n,
            seed,
            multiplier: m,
            lambda,
            validation_loss: None,
            surviving_columns: None,
            gram_error: None,
            error: None,
        };
        match run_pipeline_on(&pc, &instance) {
            Ok(run) => {
                let loss = validation.data_loss(run.fine_tuned.matrix())?;
                row.validation_loss = Some(loss);
                row.surviving_columns = Some(run.report.surviving_columns);
                row.gram_error = Some(run.report.gram_error_after_finetune);
                if best.as_ref().is_none_or(|b| loss < b.0) {
                    best = Some((loss, m, run));
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let (_, m, run) = best.ok_or_else(|| anyhow!("every lambda failed for seed {seed}, n {n}"))?;
    Ok((instance, m, run, rows))
}

/// Worst ratio over windows starting at or above `target`, and whether the
/// trace ever went below it.
pub fn window_ratios(errors: &[f64], window: usize, target: f64) -> (f64, bool) {
    let reached = errors.iter().any(|&g| g < target);
    let mut worst: f64 = 0.0;
    for i in 0..errors.len() {
        if errors[i] < target {
            break;
        }
        match errors.get(i + window) {
            Some(&later) => worst = worst.max(later / errors[i]),
            None => {
                worst = f64::INFINITY;
                break;
            }
        }
    }
    (worst, reached)
}

fn compare_seed(cfg: &PipelineCompareConfig, seed: u64) -> Result<(SeedSummary, Vec<TraceRow>, Vec<LambdaRow>)> {
    let (instance, m, run, rows) = select_lambda(cfg, &cfg.lambda_grid, cfg.n, cfg.noise_sigma, seed)?;
    let rep = &run.report;
    let prune_iteration = rep.train.iterations;
    let budget = prune_iteration + rep.fine_tune.iterations;

    let pc = pipeline_config(cfg, cfg.n, cfg.noise_sigma, seed);
    let objective = data_objective(&pc.problem.mode, &instance)?;
    let u0 = initial_factor(&pc.problem, pc.init_scale, seed)?;
    let vanilla_cfg = GdConfig {
        step_size: cfg.vanilla_step,
        max_iters: budget,
        perturbation: Perturbation::None,
        op_norm_guard: None,
        ..GdConfig::default()
    };
    let mut recorder = TraceRecorder::new(cfg.trace_stride).with_reference(instance.star.clone());
    let vanilla = perturbed_gd(&objective, &u0, &vanilla_cfg, &mut SeededRng::new(seed), &mut recorder)?;
    let vanilla_floor = lassoprune::gram_error(vanilla.u.matrix(), &instance.star)?;

    let mut traces = Vec::new();
    for rec in &rep.train.trace {
        if let Some(g) = rec.gram_error {
            traces.push(TraceRow {
                seed,
                method: "pipeline".into(),
                iter: rec.iter,
                gram_error: g,
            });
        }
    }
    let ft_errors: Vec<f64> = rep.fine_tune.trace.iter().filter_map(|r| r.gram_error).collect();
    for rec in &rep.fine_tune.trace {
        if let Some(g) = rec.gram_error {
            if rec.iter % cfg.trace_stride == 0 || rec.iter == rep.fine_tune.iterations {
                traces.push(TraceRow {
                    seed,
                    method: "pipeline".into(),
                    iter: prune_iteration + rec.iter,
                    gram_error: g,
                });
            }
        }
    }
    for rec in &recorder.records {
        if let Some(g) = rec.gram_error {
            traces.push(TraceRow {
                seed,
                method: "vanilla".into(),
                iter: rec.iter,
                gram_error: g,
            });
        }
    }
    let (worst_window_ratio, reached_target) = window_ratios(&ft_errors, cfg.rate_window, cfg.rate_target);
    Ok((
        SeedSummary {
            seed,
            multiplier: m,
            lambda: rep.params.lambda,
            surviving_columns: rep.surviving_columns,
            budget,
            prune_iteration,
            pipeline_floor: rep.gram_error_after_finetune,
            vanilla_floor,
            worst_window_ratio,
            reached_target,
        },
        traces,
        rows,
    ))
}

/// Noisy runs over `sweep_ns`; the slope is fitted to the per-n medians.
pub fn noise_sweep(
    cfg: &PipelineCompareConfig,
    base_seed: u64,
) -> Result<(SweepReport, Vec<SweepRow>, Vec<LambdaRow>)> {
    let seeds = seed_list(base_seed, cfg.seeds);
    let jobs: Vec<(usize, u64)> = cfg
        .sweep_ns
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(n, s)| {
            select_lambda(cfg, &cfg.sweep_lambda_grid, n, cfg.sweep_sigma, s).map(|(_, m, run, rows)| {
                (
                    SweepRow {
                        n,
                        seed: s,
                        multiplier: m,
                        surviving_columns: run.report.surviving_columns,
                        floor: run.report.gram_error_after_finetune,
                    },
                    rows,
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sweep_rows = Vec::new();
    let mut lambda_rows = Vec::new();
    for (row, rows) in runs {
        sweep_rows.push(row);
        lambda_rows.extend(rows);
    }
    let points: Vec<SweepSummary> = cfg
        .sweep_ns
        .iter()
        .map(|&n| SweepSummary {
            n,
            median_floor: median(
                &sweep_rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.floor)
                    .collect::<Vec<_>>(),
            ),
            reference_rate: cfg.sweep_sigma * ((cfg.r * cfg.d) as f64 / n as f64).sqrt(),
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_floor).collect();
    let report = SweepReport {
        sigma: cfg.sweep_sigma,
        slope: log_log_slope(&xs, &ys),
        points,
    };
    Ok((report, sweep_rows, lambda_rows))
}

pub fn compute(cfg: &PipelineCompareConfig, base_seed: u64) -> Result<PipelineCompareOutcome> {
    if cfg.seeds == 0 {
        bail!("seeds must be positive");
    }
    let seeds = seed_list(base_seed, cfg.seeds);
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&s| compare_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut per_seed = Vec::new();
    let mut traces = Vec::new();
    let mut lambda_rows = Vec::new();
    for (summary, t, rows) in results {
        per_seed.push(summary);
        traces.extend(t);
        lambda_rows.extend(rows);
    }
    let median_pipeline_floor = median(&per_seed.iter().map(|s| s.pipeline_floor).collect::<Vec<_>>());
    let median_vanilla_floor = median(&per_seed.iter().map(|s| s.vanilla_floor).collect::<Vec<_>>());
    let fine_tune_rate_holds = per_seed
        .iter()
        .all(|s| s.reached_target && s.worst_window_ratio <= 1.0 / cfg.rate_factor);

    let (sweep, sweep_rows) = if cfg.sweep {
        let (report, rows, lrows) = noise_sweep(cfg, base_seed)?;
        lambda_rows.extend(lrows);
        (Some(report), rows)
    } else {
        (None, Vec::new())
    };

    let default_lambda = pipeline_config(cfg, cfg.n, cfg.noise_sigma, base_seed).params()?.lambda;
    Ok(PipelineCompareOutcome {
        report: PipelineCompareReport {
            seeds,
            default_lambda,
            per_seed,
            median_pipeline_floor,
            median_vanilla_floor,
            floor_ratio: median_vanilla_floor / median_pipeline_floor,
            fine_tune_rate_holds,
            sweep,
        },
        traces,
        lambda_rows,
        sweep_rows,
    })
}

pub fn write(outcome: &PipelineCompareOutcome, out: &mut OutputDir, plots: bool) -> Result<()> {
    out.write_csv("compare_traces.csv", &outcome.traces)?;
    out.write_csv("compare_summary.csv", &outcome.report.per_seed)?;
    out.write_csv("lambda_selection.csv", &outcome.lambda_rows)?;
    let sweep = outcome
        .report
        .sweep
        .as_ref()
        .map(|s| {
            out.write_csv("noise_sweep.csv", &outcome.sweep_rows)?;
            out.write_csv("noise_sweep_median.csv", &s.points)
        })
        .transpose()?;
    out.write_json("report.json", &outcome.report)?;
    if plots {
        let first = outcome.report.per_seed[0].seed;
        let first_rows: Vec<&TraceRow> = outcome.traces.iter().filter(|t| t.seed == first).collect();
        let seed_csv = out.write_csv("compare_traces_first_seed.csv", &first_rows)?;
        let svg = out.artifact_path("compare.svg");
        line_chart(
            &seed_csv,
            &svg,
            &LineSpec {
                title: "Gram error: vanilla GD vs prune and fine-tune",
                x: "iter",
                y: vec!["gram_error"],
                group: Some("method"),
                log_x: false,
                log_y: true,
                x_label: "iteration",
                y_label: "gram error",
                marker: Some(outcome.report.per_seed[0].prune_iteration as f64),
            },
        )?;
        if let Some(path) = sweep {
            let svg = out.artifact_path("noise_sweep.svg");
            line_chart(
                &path,
                &svg,
                &LineSpec {
                    title: "Error floor against sample size",
                    x: "n",
                    y: vec!["median_floor", "reference_rate"],
                    group: None,
                    log_x: true,
                    log_y: true,
                    x_label: "n",
                    y_label: "gram error",
                    marker: None,
                },
            )?;
        }
    }
    Ok(())
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, PipelineCompareConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let outcome = compute(&cfg, common.seed)?;
    write(&outcome, &mut out, common.plots)?;
    let r = &outcome.report;
    println!(
        "pipeline-compare: median floors pipeline {:.3e} vanilla {:.3e} (ratio {:.1}); fine-tune rate holds {}",
        r.median_pipeline_floor, r.median_vanilla_floor, r.floor_ratio, r.fine_tune_rate_holds
    );
    if let Some(s) = &r.sweep {
        println!("noise sweep sigma {}: log-log slope {:.3}", s.sigma, s.slope);
    }
    out.finish("pipeline-compare", config_echo(&common, &cfg)?, r.seeds.clone())?;
    Ok(0)
}
