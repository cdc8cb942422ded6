//! Monte-Carlo lower bounds on the restricted-isometry constant of Gaussian
//! sensing sets, next to the constant the finite-sample guarantee asks for.

use anyhow::{bail, Result};
use lassoprune::sensing::{gen_gaussian_sensing, rip_estimate, rip_requirement, GaussianScale};
use lassoprune::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_echo, seed_list, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;
use crate::plot::{line_chart, LineSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RipReportConfig {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub sigma_r_star: f64,
    pub ns: Vec<usize>,
    pub trials: usize,
    /// `None` means `min(d, k + r)`.
    pub rank_bound: Option<usize>,
    pub c_delta: f64,
    pub seeds: usize,
}

impl Default for RipReportConfig {
    fn default() -> Self {
        Self {
            d: 20,
            k: 20,
            r: 3,
            sigma_r_star: 0.5,
            ns: vec![100, 250, 1000, 4000],
            trials: 200,
            rank_bound: None,
            c_delta: 1.0,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipRow {
    pub n: usize,
    pub seed: u64,
    pub rank_bound: usize,
    pub trials: usize,
    pub delta_hat: f64,
    pub requirement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub requirement: f64,
    pub rows: Vec<RipRow>,
}

pub fn compute(cfg: &RipReportConfig, base_seed: u64) -> Result<RipReport> {
    if cfg.ns.is_empty() || cfg.seeds == 0 {
        bail!("need at least one n and one seed");
    }
    let rank_bound = cfg.rank_bound.unwrap_or((cfg.k + cfg.r).min(cfg.d));
    let requirement = rip_requirement(cfg.c_delta, cfg.sigma_r_star, cfg.k, cfg.r);
    let jobs: Vec<(usize, u64)> = cfg
        .ns
        .iter()
        .flat_map(|&n| seed_list(base_seed, cfg.seeds).into_iter().map(move |s| (n, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, seed)| -> Result<RipRow> {
            let root = SeededRng::new(seed);
            let sensing = gen_gaussian_sensing(n, cfg.d, GaussianScale::Isotropic, &mut root.substream(1))?;
            let est = rip_estimate(&sensing, rank_bound, cfg.trials, &mut root.substream(20))?;
            Ok(RipRow {
                n,
                seed,
                rank_bound,
                trials: cfg.trials,
                delta_hat: est.delta_hat,
                requirement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RipReport { requirement, rows })
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, RipReportConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let report = compute(&cfg, common.seed)?;
    let csv = out.write_csv("rip.csv", &report.rows)?;
    out.write_json("report.json", &report)?;
    if common.plots {
        let svg = out.artifact_path("rip.svg");
        line_chart(
            &csv,
            &svg,
            &LineSpec {
                title: "Estimated RIP constant against sample size",
                x: "n",
                y: vec!["delta_hat", "requirement"],
                group: None,
                log_x: true,
                log_y: true,
                x_label: "n",
                y_label: "delta",
                marker: None,
            },
        )?;
    }
    for row in &report.rows {
        println!(
            "rip-report: n {:>6} seed {} delta_hat {:.4} (requirement {:.2e})",
            row.n, row.seed, row.delta_hat, row.requirement
        );
    }
    out.finish(
        "rip-report",
        config_echo(&common, &cfg)?,
        seed_list(common.seed, cfg.seeds),
    )?;
    Ok(0)
}
