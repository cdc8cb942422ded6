//! Acceptance checks with pinned tolerances. Prints one PASS/FAIL line per
//! criterion and exits nonzero when any criterion fails.

use std::time::Instant;

use lassoprune::pipeline::{run_pipeline, PipelineConfig, PipelineReport, ProblemConfig, ProblemMode};
use lassoprune_cli::experiments::flow_diagnostics::{self, FlowDiagnosticsConfig};
use lassoprune_cli::experiments::implicit_reg::{self, ImplicitRegConfig};
use lassoprune_cli::experiments::pipeline_compare::{self, PipelineCompareConfig};
use lassoprune_cli::experiments::quadratic_nn::{self, QuadraticNnConfig};
use lassoprune_cli::experiments::verify::{self, VerifyConfig};
use rayon::prelude::*;

struct Line {
    id: u32,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

impl Line {
    fn print(&self) {
        let within = self.seconds <= self.budget;
        println!(
            "criterion {}: {} | {} | {}{}",
            self.id,
            if self.pass && within { "PASS" } else { "FAIL" },
            self.detail,
            if self.budget.is_finite() {
                format!("{:.1} s of {:.0} s budget", self.seconds, self.budget)
            } else {
                "reuses criterion 6 runs".to_string()
            },
            if within { "" } else { " (over budget)" },
        );
    }

    fn ok(&self) -> bool {
        self.pass && self.seconds <= self.budget
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed().as_secs_f64())
}

fn failed(id: u32, err: anyhow::Error, seconds: f64, budget: f64) -> Line {
    Line {
        id,
        pass: false,
        detail: format!("error: {err:#}"),
        seconds,
        budget,
    }
}

fn verify_only(suite: &str) -> VerifyConfig {
    VerifyConfig {
        suites: vec![suite.to_string()],
        ..VerifyConfig::default()
    }
}

fn criterion_1() -> Line {
    let (res, secs) = timed(|| verify::compute(&verify_only("finite-difference"), 0));
    match res {
        Ok(r) => {
            let fam = ["population", "empirical", "regularizer", "quadratic-network"];
            let grads: Vec<String> = fam
                .iter()
                .map(|f| format!("{f} {:.1e}", r.worst("finite-difference", f, "gradient")))
                .collect();
            Line {
                id: 1,
                pass: r.suite("finite-difference").is_some_and(|s| s.passed),
                detail: format!(
                    "20 instances per family; worst gradient rel err [{}] (tol 1e-6); worst quadform {:.1e} (tol 1e-5); U D(U) gap {:.1e}",
                    grads.join(", "),
                    r.worst("finite-difference", "", "quadform"),
                    r.worst("finite-difference", "regularizer", "u-times-d"),
                ),
                seconds: secs,
                budget: 10.0,
            }
        }
        Err(e) => failed(1, e, secs, 10.0),
    }
}

fn criterion_2() -> Line {
    let (res, secs) = timed(|| verify::compute(&verify_only("boundedness"), 0));
    match res {
        Ok(r) => Line {
            id: 2,
            pass: r.suite("boundedness").is_some_and(|s| s.passed && s.checks == 50),
            detail: format!(
                "50 runs x 10^4 steps, alpha 1/8, lambda 0.9 sqrt(beta); max op norm {:.4} (bound 3)",
                r.worst("boundedness", "", "max-op-norm")
            ),
            seconds: secs,
            budget: 120.0,
        },
        Err(e) => failed(2, e, secs, 120.0),
    }
}

fn criterion_3() -> (Line, Option<f64>) {
    let cfg = FlowDiagnosticsConfig {
        alpha0: 1e-4,
        t_end: 200.0,
        stop_grad_norm: None,
        ..FlowDiagnosticsConfig::default()
    };
    let (res, secs) = timed(|| flow_diagnostics::compute(&cfg, 0));
    match res {
        Ok(o) => {
            let r = &o.report;
            (
                Line {
                    id: 3,
                    pass: r.max_noise_increase <= 1e-8,
                    detail: format!(
                        "d=k=50, alpha0 1e-4, {} snapshots to t={:.0}; max ||E|| increase {:.2e} (slack 1e-8)",
                        o.flow.len(),
                        r.t_final,
                        r.max_noise_increase
                    ),
                    seconds: secs,
                    budget: 30.0,
                },
                Some(r.column_law_max_deviation),
            )
        }
        Err(e) => (failed(3, e, secs, 30.0), None),
    }
}

fn criterion_4(deviation_at_1e4: Option<f64>) -> Line {
    let cfg = FlowDiagnosticsConfig {
        alpha0: 1e-6,
        stop_grad_norm: Some(1e-8),
        ..FlowDiagnosticsConfig::default()
    };
    let (res, secs) = timed(|| flow_diagnostics::compute(&cfg, 0));
    match res {
        Ok(o) => {
            let r = &o.report;
            Line {
                id: 4,
                pass: r.converged && r.column_law_max_deviation <= 0.1,
                detail: format!(
                    "d=k=50, alpha0 1e-6, stopped at grad norm < 1e-8: {} (t={:.1}); max column-norm deviation {:.2e} (tol 0.10); at alpha0 1e-4, t=200: {}",
                    r.converged,
                    r.t_final,
                    r.column_law_max_deviation,
                    deviation_at_1e4.map_or("n/a".into(), |d| format!("{d:.2e}")),
                ),
                seconds: secs,
                budget: 60.0,
            }
        }
        Err(e) => failed(4, e, secs, 60.0),
    }
}

fn criterion_5() -> Line {
    let cfg = ImplicitRegConfig {
        d: 200,
        k: 200,
        r: 1,
        sigma_r_star: 1.0,
        ..ImplicitRegConfig::default()
    };
    let (res, secs) = timed(|| implicit_reg::compute(&cfg, 0));
    match res {
        Ok(o) => {
            let r = &o.report;
            let survivors = r.regularized.as_ref().map(|g| g.surviving_columns);
            Line {
                id: 5,
                pass: r.unregularized_census.count >= 10 && survivors == Some(1),
                detail: format!(
                    "d=k=200, r=1, alpha0 {:.2e}; unregularized census at 0.99: {} (need >= 10); regularized survivors {} (need 1)",
                    r.alpha0,
                    r.unregularized_census.count,
                    survivors.map_or("-".into(), |s| s.to_string()),
                ),
                seconds: secs,
                budget: 300.0,
            }
        }
        Err(e) => failed(5, e, secs, 300.0),
    }
}

fn criterion_6() -> (Line, Vec<PipelineReport>) {
    let modes = [ProblemMode::Population, ProblemMode::Empirical { n: 4000 }];
    let jobs: Vec<(ProblemMode, u64)> = modes.iter().flat_map(|&m| (0..10u64).map(move |s| (m, s))).collect();
    let (results, secs) = timed(|| {
        jobs.par_iter()
            .map(|&(mode, seed)| {
                run_pipeline(&PipelineConfig {
                    problem: ProblemConfig {
                        mode,
                        ..ProblemConfig::default()
                    },
                    seed,
                    ..PipelineConfig::default()
                })
            })
            .collect::<Vec<_>>()
    });
    let mut pass = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for mode in modes {
        let runs: Vec<&Result<PipelineReport, _>> = jobs
            .iter()
            .zip(&results)
            .filter(|((m, _), _)| *m == mode)
            .map(|(_, r)| r)
            .collect();
        let ok: Vec<&PipelineReport> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let three: Vec<&&PipelineReport> = ok.iter().filter(|r| r.surviving_columns == 3).collect();
        let worst_gram = three.iter().map(|r| r.gram_error_after_prune).fold(0.0, f64::max);
        let errors = runs.len() - ok.len();
        pass &= three.len() >= 9 && worst_gram <= 0.125;
        parts.push(format!(
            "{}: {}/10 with 3 survivors, worst post-prune gram {:.3e}{}",
            mode.name(),
            three.len(),
            worst_gram,
            if errors > 0 {
                format!(", {errors} errors")
            } else {
                String::new()
            }
        ));
        reports.extend(ok.into_iter().cloned());
    }
    (
        Line {
            id: 6,
            pass,
            detail: format!("{} (need >= 9/10, gram <= 0.125)", parts.join("; ")),
            seconds: secs,
            budget: 600.0,
        },
        reports,
    )
}

fn criteria_7_8() -> (Line, Line) {
    let cfg = PipelineCompareConfig {
        sweep: false,
        ..PipelineCompareConfig::default()
    };
    let (compare, compare_secs) = timed(|| pipeline_compare::compute(&cfg, 0));
    let (sweep, sweep_secs) = timed(|| pipeline_compare::noise_sweep(&cfg, 0));
    let line8 = match &compare {
        Ok(o) => {
            let r = &o.report;
            Line {
                id: 8,
                pass: r.floor_ratio >= 10.0,
                detail: format!(
                    "n=100, 5 seeds: median floors pipeline {:.2e}, vanilla {:.2e}, ratio {:.2e} (need >= 10)",
                    r.median_pipeline_floor, r.median_vanilla_floor, r.floor_ratio
                ),
                seconds: compare_secs,
                budget: 300.0,
            }
        }
        Err(e) => failed(8, anyhow::anyhow!("{e:#}"), compare_secs, 300.0),
    };
    let secs = compare_secs + sweep_secs;
    let line7 = match (&compare, &sweep) {
        (Ok(o), Ok((s, _, _))) => {
            let r = &o.report;
            let worst = r.per_seed.iter().map(|p| p.worst_window_ratio).fold(0.0, f64::max);
            let slope_ok = (-0.65..=-0.35).contains(&s.slope);
            let medians: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("n={} {:.3e}", p.n, p.median_floor))
                .collect();
            Line {
                id: 7,
                pass: r.fine_tune_rate_holds && slope_ok,
                detail: format!(
                    "noiseless: worst 200-iteration ratio {:.2e} (need <= 0.1 until < 1e-8); sigma 0.1 medians [{}], slope {:.3} (need [-0.65, -0.35])",
                    worst,
                    medians.join(", "),
                    s.slope
                ),
                seconds: secs,
                budget: 600.0,
            }
        }
        (Err(e), _) | (_, Err(e)) => failed(7, anyhow::anyhow!("{e:#}"), secs, 600.0),
    };
    (line7, line8)
}

fn criterion_9() -> Line {
    let (res, secs) = timed(|| verify::compute(&verify_only("sosp-oracle"), 0));
    match res {
        Ok(r) => Line {
            id: 9,
            pass: r.suite("sosp-oracle").is_some_and(|s| s.passed && s.checks == 10),
            detail: format!(
                "10 instances, dk <= 200; max |lambda_min(Lanczos) - lambda_min(FD Hessian)| {:.2e} (tol 1e-6)",
                r.worst("sosp-oracle", "", "lambda-min-gap")
            ),
            seconds: secs,
            budget: 60.0,
        },
        Err(e) => failed(9, e, secs, 60.0),
    }
}

fn criterion_10(reports: &[PipelineReport]) -> Line {
    let worst = reports.iter().map(|r| r.max_surviving_cosine).fold(0.0, f64::max);
    Line {
        id: 10,
        pass: reports.len() == 20 && worst <= 0.15,
        detail: format!(
            "{} criterion-6 runs; max surviving |cosine| {:.3e} (tol 0.15)",
            reports.len(),
            worst
        ),
        seconds: 0.0,
        budget: f64::INFINITY,
    }
}

fn criterion_11() -> Line {
    let cfg = QuadraticNnConfig {
        ablation: false,
        ..QuadraticNnConfig::default()
    };
    let (res, secs) = timed(|| quadratic_nn::compute(&cfg, 0));
    match res {
        Ok(r) => {
            let grams: Vec<String> = r
                .runs
                .iter()
                .map(|x| {
                    format!(
                        "{}:{}",
                        x.surviving_columns.map_or("err".into(), |s| s.to_string()),
                        x.gram_error_after_prune.map_or("-".into(), |g| format!("{g:.2e}"))
                    )
                })
                .collect();
            Line {
                id: 11,
                pass: r.successes >= 4,
                detail: format!(
                    "d=20, r=2, k=10, n={}: {}/5 seeds with 2 neurons and gram <= 0.125 (need >= 4); survivors:gram [{}]",
                    r.n,
                    r.successes,
                    grams.join(", ")
                ),
                seconds: secs,
                budget: 300.0,
            }
        }
        Err(e) => failed(11, e, secs, 300.0),
    }
}

fn main() {
    let mut lines = Vec::new();
    let mut emit = |line: Line| {
        line.print();
        lines.push(line);
    };
    emit(criterion_1());
    emit(criterion_2());
    let (l3, dev) = criterion_3();
    emit(l3);
    emit(criterion_4(dev));
    emit(criterion_5());
    let (l6, reports) = criterion_6();
    emit(l6);
    let (l7, l8) = criteria_7_8();
    emit(l7);
    emit(l8);
    emit(criterion_9());
    emit(criterion_10(&reports));
    emit(criterion_11());
    let passed = lines.iter().filter(|l| l.ok()).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    if passed != lines.len() {
        std::process::exit(1);
    }
}
