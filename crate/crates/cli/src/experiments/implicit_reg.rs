//! Small-initialization gradient flow against the regularized pipeline:
//! how many columns stay active without the group-Lasso penalty.

use anyhow::{bail, Result};
use lassoprune::pipeline::{
    build_instance, initial_factor, run_pipeline_on, PipelineConfig, ProblemConfig, ProblemMode,
};
use lassoprune::solver::{active_column_census, fraction_above_curve, gradient_flow, Census, FlowConfig};
use lassoprune::{column_norms, gram_error};
use serde::{Deserialize, Serialize};

use super::{config_echo, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;
use crate::plot::{bar_chart, line_chart, LineSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImplicitRegConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub sigma_r_star: f64,
    /// Entry scale of the initial factor; `None` uses `1/(k³ d ln(kd))`.
    pub alpha0: Option<f64>,
    pub t_end: f64,
    pub stop_grad_norm: f64,
    pub snapshot_every: f64,
    pub census_threshold: f64,
    pub curve_steps: usize,
    pub histogram_bins: usize,
    pub regularized: bool,
    pub certify: bool,
}

impl Default for ImplicitRegConfig {
    fn default() -> Self {
        Self {
            d: 500,
            k: 500,
            r: 4,
            sigma_r_star: 0.5,
            alpha0: None,
            t_end: 1000.0,
            stop_grad_norm: 1e-8,
            snapshot_every: 1.0,
            census_threshold: 0.99,
            curve_steps: 20,
            histogram_bins: 20,
            regularized: true,
            certify: true,
        }
    }
}

/// `1/(k³ d ln(kd))`, the small-initialization scale with unit constant.
pub fn alpha_bound(d: usize, k: usize) -> f64 {
    let (d, k) = (d as f64, k as f64);
    1.0 / (k.powi(3) * d * (k * d).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub t_final: f64,
    pub steps: usize,
    pub converged: bool,
    pub gram_error: f64,
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedSummary {
    /// Census of the trained (pre-prune) factor.
    pub census: Census,
    pub surviving_columns: usize,
    pub gram_error_after_prune: f64,
    pub gram_error_after_finetune: f64,
    pub certified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRegReport {
    pub seed: u64,
    pub alpha0: f64,
    pub alpha_bound: f64,
    pub flow: FlowSummary,
    pub unregularized_census: Census,
    pub regularized: Option<RegularizedSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub x: f64,
    pub unregularized: f64,
    pub regularized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub lo: f64,
    pub hi: f64,
    pub unregularized: usize,
    pub regularized: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnRow {
    pub column: usize,
    pub unregularized_norm: f64,
    pub regularized_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRow {
    pub t: f64,
    pub gram_error: f64,
    pub field_norm: f64,
    pub max_column_norm: f64,
}

pub struct ImplicitRegOutcome {
    pub report: ImplicitRegReport,
    pub curve: Vec<CurveRow>,
    pub histogram: Vec<HistogramRow>,
    pub columns: Vec<ColumnRow>,
    pub flow: Vec<FlowRow>,
}

fn histogram(norms: &[f64], bins: usize) -> Vec<usize> {
    let max = norms.iter().copied().fold(0.0, f64::max);
    let mut counts = vec![0; bins];
    for n in norms {
        let x = if max > 0.0 { n / max } else { 0.0 };
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    counts
}

pub fn compute(cfg: &ImplicitRegConfig, seed: u64) -> Result<ImplicitRegOutcome> {
    if cfg.curve_steps == 0 || cfg.histogram_bins == 0 {
        bail!("curve_steps and histogram_bins must be positive");
    }
    let problem = ProblemConfig {
        d: cfg.d,
        k: cfg.k,
        r: cfg.r,
        sigma_r_star: cfg.sigma_r_star,
        noise_sigma: 0.0,
        mode: ProblemMode::Population,
    };
    let bound = alpha_bound(cfg.d, cfg.k);
    let alpha0 = cfg.alpha0.unwrap_or(bound);
    let instance = build_instance(&problem, seed)?;
    let u0 = initial_factor(&problem, Some(alpha0), seed)?;

    let flow_cfg = FlowConfig {
        snapshot_every: cfg.snapshot_every,
        stop_grad_norm: Some(cfg.stop_grad_norm),
        ..FlowConfig::default()
    };
    let trace = gradient_flow(&instance.star, &u0, cfg.t_end, &flow_cfg)?;
    let unreg = trace.final_u.matrix();
    let unreg_census = active_column_census(unreg, cfg.census_threshold)?;
    let unreg_norms = column_norms(unreg);

    let regularized = if cfg.regularized {
        let pcfg = PipelineConfig {
            problem,
            init_scale: Some(alpha0),
            certify: cfg.certify,
            seed,
            ..PipelineConfig::default()
        };
        Some(run_pipeline_on(&pcfg, &instance)?)
    } else {
        None
    };
    let reg_norms = regularized.as_ref().map(|run| column_norms(run.trained.matrix()));

    let unreg_curve = fraction_above_curve(unreg, cfg.curve_steps);
    let reg_curve = regularized
        .as_ref()
        .map(|run| fraction_above_curve(run.trained.matrix(), cfg.curve_steps));
    let curve = unreg_curve
        .iter()
        .enumerate()
        .map(|(i, &(x, f))| CurveRow {
            x,
            unregularized: f,
            regularized: reg_curve.as_ref().map(|c| c[i].1),
        })
        .collect();

    let unreg_hist = histogram(&unreg_norms, cfg.histogram_bins);
    let reg_hist = reg_norms.as_ref().map(|n| histogram(n, cfg.histogram_bins));
    let width = 1.0 / cfg.histogram_bins as f64;
    let histogram = (0..cfg.histogram_bins)
        .map(|b| HistogramRow {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            unregularized: unreg_hist[b],
            regularized: reg_hist.as_ref().map(|h| h[b]),
        })
        .collect();

    let columns = (0..cfg.k)
        .map(|j| ColumnRow {
            column: j,
            unregularized_norm: unreg_norms[j],
            regularized_norm: reg_norms.as_ref().map(|n| n[j]),
        })
        .collect();

    let flow = trace
        .snapshots
        .iter()
        .map(|s| FlowRow {
            t: s.t,
            gram_error: s.gram_error,
            field_norm: s.field_norm,
            max_column_norm: s.column_norms.iter().copied().fold(0.0, f64::max),
        })
        .collect();

    let regularized = match &regularized {
        Some(run) => Some(RegularizedSummary {
            census: active_column_census(run.trained.matrix(), cfg.census_threshold)?,
            surviving_columns: run.report.surviving_columns,
            gram_error_after_prune: run.report.gram_error_after_prune,
            gram_error_after_finetune: run.report.gram_error_after_finetune,
            certified: run.report.sosp.as_ref().map(|s| s.certified()),
        }),
        None => None,
    };

    Ok(ImplicitRegOutcome {
        report: ImplicitRegReport {
            seed,
            alpha0,
            alpha_bound: bound,
            flow: FlowSummary {
                t_final: trace.last().t,
                steps: trace.steps,
                converged: trace.converged,
                gram_error: gram_error(unreg, &instance.star)?,
                t0: trace.t0,
            },
            unregularized_census: unreg_census,
            regularized,
        },
        curve,
        histogram,
        columns,
        flow,
    })
}

pub fn write(outcome: &ImplicitRegOutcome, out: &mut OutputDir, plots: bool) -> Result<()> {
    let curve = out.write_csv("fraction_curve.csv", &outcome.curve)?;
    let hist = out.write_csv("column_histogram.csv", &outcome.histogram)?;
    out.write_csv("column_norms.csv", &outcome.columns)?;
    out.write_csv("flow_trace.csv", &outcome.flow)?;
    out.write_json("report.json", &outcome.report)?;
    if plots {
        let reg = outcome.report.regularized.is_some();
        let mut y = vec!["unregularized"];
        if reg {
            y.push("regularized");
        }
        let svg = out.artifact_path("fraction_curve.svg");
        line_chart(
            &curve,
            &svg,
            &LineSpec {
                title: "Fraction of columns with norm at least x times the largest",
                x: "x",
                y: y.clone(),
                group: None,
                log_x: false,
                log_y: false,
                x_label: "x",
                y_label: "fraction",
                marker: None,
            },
        )?;
        let svg = out.artifact_path("column_histogram.svg");
        bar_chart(
            &hist,
            &svg,
            "Column norms relative to the largest",
            "lo",
            "hi",
            &y,
            "norm / max norm",
        )?;
    }
    Ok(())
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, ImplicitRegConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let outcome = compute(&cfg, common.seed)?;
    write(&outcome, &mut out, common.plots)?;
    let r = &outcome.report;
    println!(
        "implicit-reg: alpha0 {:.3e} (bound {:.3e}); unregularized census {} of {}; regularized survivors {}",
        r.alpha0,
        r.alpha_bound,
        r.unregularized_census.count,
        cfg.k,
        r.regularized
            .as_ref()
            .map_or("-".to_string(), |g| g.surviving_columns.to_string()),
    );
    out.finish("implicit-reg", config_echo(&common, &cfg)?, vec![common.seed])?;
    Ok(0)
}
