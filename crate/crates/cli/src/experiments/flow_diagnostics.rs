//! Rank-one gradient flow from small initialization: signal/noise split,
//! noise monotonicity and the limiting column-norm law.

use anyhow::{bail, Result};
use lassoprune::pipeline::{build_instance, initial_factor, ProblemConfig, ProblemMode};
use lassoprune::solver::{gradient_flow, FieldScale, FlowConfig};
use serde::{Deserialize, Serialize};

use super::{config_echo, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;
use crate::plot::{line_chart, LineSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowDiagnosticsConfig {
    pub d: usize,
    pub k: usize,
    pub alpha0: f64,
    pub t_end: f64,
    /// `None` integrates to `t_end`.
    pub stop_grad_norm: Option<f64>,
    pub snapshot_every: f64,
    pub scale: FieldScale,
    /// Signal coordinates written to `signal.csv`.
    pub tracked_columns: usize,
    /// Allowed `‖E‖_F` increase between snapshots.
    pub monotone_slack: f64,
    /// Allowed relative deviation of the final column norms from the law.
    pub column_law_tolerance: f64,
}

impl Default for FlowDiagnosticsConfig {
    fn default() -> Self {
        Self {
            d: 50,
            k: 50,
            alpha0: 1e-6,
            t_end: 500.0,
            stop_grad_norm: Some(1e-8),
            snapshot_every: 0.25,
            scale: FieldScale::Quarter,
            tracked_columns: 8,
            monotone_slack: 1e-8,
            column_law_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitStats {
    pub r0_norm_sq: f64,
    pub e0_fro_sq: f64,
    pub min_abs_r0: f64,
    pub max_abs_r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnosticsReport {
    pub seed: u64,
    pub init: InitStats,
    pub t0: Option<f64>,
    pub t_final: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub converged: bool,
    pub final_r_norm: f64,
    pub final_e_norm: f64,
    pub final_gram_error: f64,
    pub max_noise_increase: f64,
    pub noise_monotone: bool,
    pub max_reconstruction_error: f64,
    /// `max_i |‖Ue_i‖ / (|r_i(0)|/‖r(0)‖) − 1|` at the end of the run.
    pub column_law_max_deviation: f64,
    pub column_law_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRow {
    pub t: f64,
    pub r_norm: f64,
    pub e_norm: f64,
    pub gram_error: f64,
    pub field_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignalRow {
    pub t: f64,
    pub column: usize,
    pub abs_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnRow {
    pub column: usize,
    pub final_norm: f64,
    pub predicted_norm: f64,
    pub ratio: f64,
}

pub struct FlowDiagnosticsOutcome {
    pub report: FlowDiagnosticsReport,
    pub flow: Vec<FlowRow>,
    pub signal: Vec<SignalRow>,
    pub columns: Vec<ColumnRow>,
}

pub fn compute(cfg: &FlowDiagnosticsConfig, seed: u64) -> Result<FlowDiagnosticsOutcome> {
    if !(cfg.alpha0 > 0.0) {
        bail!("alpha0 must be positive");
    }
    let problem = ProblemConfig {
        d: cfg.d,
        k: cfg.k,
        r: 1,
        sigma_r_star: 1.0,
        noise_sigma: 0.0,
        mode: ProblemMode::Population,
    };
    let instance = build_instance(&problem, seed)?;
    let u0 = initial_factor(&problem, Some(cfg.alpha0), seed)?;
    let flow_cfg = FlowConfig {
        scale: cfg.scale,
        snapshot_every: cfg.snapshot_every,
        stop_grad_norm: cfg.stop_grad_norm,
        ..FlowConfig::default()
    };
    let trace = gradient_flow(&instance.star, &u0, cfg.t_end, &flow_cfg)?;
    let first = trace.snapshots[0].split.as_ref().expect("rank-one split");
    let last = trace.last();
    let last_split = last.split.as_ref().expect("rank-one split");
    let r0 = trace.r0.as_ref().expect("rank-one r0");
    let r0_norm = r0.iter().map(|v| v * v).sum::<f64>().sqrt();

    let columns: Vec<ColumnRow> = last
        .column_norms
        .iter()
        .zip(r0)
        .enumerate()
        .map(|(column, (&final_norm, r))| {
            let predicted_norm = r.abs() / r0_norm;
            ColumnRow {
                column,
                final_norm,
                predicted_norm,
                ratio: final_norm / predicted_norm,
            }
        })
        .collect();
    let column_law_max_deviation = columns.iter().map(|c| (c.ratio - 1.0).abs()).fold(0.0, f64::max);
    let max_noise_increase = trace.max_noise_increase().unwrap_or(0.0);

    let flow = trace
        .snapshots
        .iter()
        .map(|s| {
            let sp = s.split.as_ref().expect("rank-one split");
            FlowRow {
                t: s.t,
                r_norm: sp.r_norm,
                e_norm: sp.e_norm,
                gram_error: s.gram_error,
                field_norm: s.field_norm,
            }
        })
        .collect();
    let tracked = cfg.tracked_columns.min(cfg.k);
    let signal = trace
        .snapshots
        .iter()
        .flat_map(|s| {
            let sp = s.split.as_ref().expect("rank-one split");
            (0..tracked).map(move |j| SignalRow {
                t: s.t,
                column: j,
                abs_r: sp.r_abs[j],
            })
        })
        .collect();

    Ok(FlowDiagnosticsOutcome {
        report: FlowDiagnosticsReport {
            seed,
            init: InitStats {
                r0_norm_sq: first.r_norm.powi(2),
                e0_fro_sq: first.e_norm.powi(2),
                min_abs_r0: r0.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
                max_abs_r0: r0.iter().map(|v| v.abs()).fold(0.0, f64::max),
            },
            t0: trace.t0,
            t_final: last.t,
            steps: trace.steps,
            rejected_steps: trace.rejected_steps,
            converged: trace.converged,
            final_r_norm: last_split.r_norm,
            final_e_norm: last_split.e_norm,
            final_gram_error: last.gram_error,
            max_noise_increase,
            noise_monotone: max_noise_increase <= cfg.monotone_slack,
            max_reconstruction_error: trace.max_reconstruction_error().unwrap_or(0.0),
            column_law_max_deviation,
            column_law_holds: column_law_max_deviation <= cfg.column_law_tolerance,
        },
        flow,
        signal,
        columns,
    })
}

pub fn write(outcome: &FlowDiagnosticsOutcome, out: &mut OutputDir, plots: bool) -> Result<()> {
    let flow = out.write_csv("flow.csv", &outcome.flow)?;
    let signal = out.write_csv("signal.csv", &outcome.signal)?;
    out.write_csv("columns.csv", &outcome.columns)?;
    out.write_json("report.json", &outcome.report)?;
    if plots {
        let svg = out.artifact_path("signal_noise.svg");
        line_chart(
            &flow,
            &svg,
            &LineSpec {
                title: "Signal and noise norms",
                x: "t",
                y: vec!["r_norm", "e_norm"],
                group: None,
                log_x: false,
                log_y: true,
                x_label: "t",
                y_label: "norm",
                marker: outcome.report.t0,
            },
        )?;
        let svg = out.artifact_path("signal_coordinates.svg");
        line_chart(
            &signal,
            &svg,
            &LineSpec {
                title: "Signal coordinates |r_i(t)|",
                x: "t",
                y: vec!["abs_r"],
                group: Some("column"),
                log_x: false,
                log_y: true,
                x_label: "t",
                y_label: "|r_i|",
                marker: outcome.report.t0,
            },
        )?;
    }
    Ok(())
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, FlowDiagnosticsConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let outcome = compute(&cfg, common.seed)?;
    write(&outcome, &mut out, common.plots)?;
    let r = &outcome.report;
    println!(
        "flow-diagnostics: t_final {:.2} T0 {} noise monotone {} (max increase {:.2e}); column law deviation {:.3e}",
        r.t_final,
        r.t0.map_or("-".into(), |t| format!("{t:.2}")),
        r.noise_monotone,
        r.max_noise_increase,
        r.column_law_max_deviation,
    );
    out.finish("flow-diagnostics", config_echo(&common, &cfg)?, vec![common.seed])?;
    Ok(0)
}
