//! Invariant suites: finite differences, boundedness, monotonicity,
//! orthogonality and eigen-solver agreement.

use anyhow::{bail, Result};
use lassoprune::linalg::symmetric_min_eigenvalue;
use lassoprune::objectives::{d_diag, reg_grad, reg_hess_quadform, reg_value};
use lassoprune::pipeline::{default_params, run_pipeline, Constants, PipelineConfig};
use lassoprune::sensing::{gen_gaussian_sensing, gen_ground_truth, gen_rank_one_sensing, measure, GaussianScale};
use lassoprune::solver::{
    gradient_flow, hessian_min_eigenpair, perturbed_gd, EigenConfig, FlowConfig, GdConfig, IterState, PerturbTrigger,
    Perturbation, TraceSink,
};
use lassoprune::{op_norm, GroundTruth, Objective, SeededRng};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_echo, setup_threads};
use crate::config::{resolve, Common, Overrides};
use crate::output::OutputDir;

pub const SUITES: [&str; 5] = [
    "finite-difference",
    "boundedness",
    "monotonicity",
    "orthogonality",
    "sosp-oracle",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suites: Vec<String>,
    pub fd_instances: usize,
    pub fd_gradient_tol: f64,
    pub fd_quadform_tol: f64,
    pub fd_hvp_tol: f64,
    pub boundedness_runs: usize,
    pub boundedness_steps: usize,
    pub boundedness_d: usize,
    pub boundedness_k: usize,
    pub boundedness_r: usize,
    pub flow_d: usize,
    pub flow_alpha0: f64,
    pub flow_t_end: f64,
    pub flow_slack: f64,
    pub descent_steps: usize,
    pub descent_slack: f64,
    pub orthogonality_seeds: usize,
    pub cosine_tol: f64,
    pub eigen_instances: usize,
    pub eigen_tol: f64,
    /// Added to every analytic gradient; a nonzero value must make the
    /// finite-difference suite fail.
    pub gradient_offset: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            fd_instances: 20,
            fd_gradient_tol: 1e-6,
            fd_quadform_tol: 1e-5,
            fd_hvp_tol: 1e-5,
            boundedness_runs: 50,
            boundedness_steps: 10_000,
            boundedness_d: 10,
            boundedness_k: 10,
            boundedness_r: 2,
            flow_d: 50,
            flow_alpha0: 1e-4,
            flow_t_end: 200.0,
            flow_slack: 1e-8,
            descent_steps: 2000,
            descent_slack: 1e-12,
            orthogonality_seeds: 3,
            cosine_tol: 0.15,
            eigen_instances: 10,
            eigen_tol: 1e-6,
            gradient_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub suite: String,
    pub case: String,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRow {
    fn at_most(suite: &str, case: String, metric: &str, value: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            case,
            metric: metric.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteSummary>,
    pub checks: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteSummary> {
        self.suites.iter().find(|s| s.name == name)
    }

    /// Largest value of `metric` among checks whose case starts with `case_prefix`.
    pub fn worst(&self, suite: &str, case_prefix: &str, metric: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.suite == suite && c.case.starts_with(case_prefix) && c.metric == metric)
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_pass(&self, suite: &str, case_prefix: &str) -> bool {
        self.checks
            .iter()
            .filter(|c| c.suite == suite && c.case.starts_with(case_prefix))
            .all(|c| c.passed)
    }
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn fd_gradient(f: &dyn Fn(&DMatrix<f64>) -> Result<f64>, u: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(u.nrows(), u.ncols());
    let mut v = u.clone();
    for i in 0..u.len() {
        let x = v[i];
        v[i] = x + h;
        let fp = f(&v)?;
        v[i] = x - h;
        let fm = f(&v)?;
        v[i] = x;
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Second directional difference with one Richardson step, `O(h⁴)`.
fn second_difference(
    f: &dyn Fn(&DMatrix<f64>) -> Result<f64>,
    u: &DMatrix<f64>,
    z: &DMatrix<f64>,
    h: f64,
) -> Result<f64> {
    let centre = f(u)?;
    let at = |h: f64| -> Result<f64> { Ok((f(&(u + z * h))? - 2.0 * centre + f(&(u - z * h))?) / (h * h)) };
    Ok((4.0 * at(h / 2.0)? - at(h)?) / 3.0)
}

/// Objective families exercised by the calculus checks.
#[derive(Debug, Clone, Copy)]
enum Family {
    Population,
    Empirical,
    Regularizer,
    QuadraticNetwork,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Population => "population",
            Family::Empirical => "empirical",
            Family::Regularizer => "regularizer",
            Family::QuadraticNetwork => "quadratic-network",
        }
    }
}

fn random_instance(rng: &mut SeededRng, max_d: usize, max_k: usize) -> Result<(usize, usize, GroundTruth)> {
    let d = 2 + (rng.next_u64() % (max_d as u64 - 1)) as usize;
    let k = 1 + (rng.next_u64() % max_k as u64) as usize;
    let r = 1 + (rng.next_u64() % d.min(3) as u64) as usize;
    let sigma = 0.3 + 0.7 * rng.uniform();
    Ok((d, k, gen_ground_truth(d, r, sigma, rng)?))
}

fn family_objective(family: Family, star: &GroundTruth, i: usize, rng: &mut SeededRng) -> Result<Option<Objective>> {
    let d = star.dim();
    Ok(match family {
        Family::Population => Some(Objective::population(star.clone())),
        Family::Empirical => {
            let raw = gen_gaussian_sensing(30 + 5 * d, d, GaussianScale::Isotropic, rng)?;
            Some(Objective::empirical(measure(star, &raw, 0.1, rng)?)?)
        }
        Family::Regularizer => None,
        Family::QuadraticNetwork => {
            let raw = gen_rank_one_sensing(30 + 5 * d, d, rng)?;
            let fro = i.is_multiple_of(2).then(|| star.frobenius_sq());
            let obj = Objective::quadratic_network(measure(star, &raw, 0.0, rng)?, fro)?;
            Some(if i.is_multiple_of(3) {
                obj
            } else {
                obj.with_regularizer(0.1, 0.05)
            })
        }
    })
}

fn finite_difference_suite(cfg: &VerifyConfig, root: &SeededRng) -> Result<Vec<CheckRow>> {
    const SUITE: &str = "finite-difference";
    let families = [
        Family::Population,
        Family::Empirical,
        Family::Regularizer,
        Family::QuadraticNetwork,
    ];
    let jobs: Vec<(usize, usize)> = (0..families.len())
        .flat_map(|f| (0..cfg.fd_instances).map(move |i| (f, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(fi, i)| -> Result<Vec<CheckRow>> {
            let family = families[fi];
            let mut rng = root.substream((fi * 10_000 + i) as u64);
            let (d, k, star) = random_instance(&mut rng, 10, 6)?;
            let u = rng.normal_matrix(d, k, 0.5);
            let mut z = rng.normal_matrix(d, k, 1.0);
            z /= z.norm();
            let case = format!("{}/{i}", family.name());
            let offset = cfg.gradient_offset;
            let mut rows = Vec::new();
            match family_objective(family, &star, i, &mut rng)? {
                Some(obj) => {
                    let obj = obj.with_gradient_offset(offset);
                    let f = |v: &DMatrix<f64>| -> Result<f64> { Ok(obj.value(v)?) };
                    let g = obj.gradient(&u)?;
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case.clone(),
                        "gradient",
                        rel_err(&g, &fd_gradient(&f, &u, 1e-6)?),
                        cfg.fd_gradient_tol,
                    ));
                    let q = obj.hess_quadform(&u, &z)?;
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case.clone(),
                        "quadform",
                        rel_err_scalar(q, second_difference(&f, &u, &z, 2e-3)?),
                        cfg.fd_quadform_tol,
                    ));
                    let h = 1e-5;
                    let fd_hvp = (obj.gradient(&(&u + &z * h))? - obj.gradient(&(&u - &z * h))?) / (2.0 * h);
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case,
                        "hvp",
                        rel_err(&obj.hvp(&u, &z)?, &fd_hvp),
                        cfg.fd_hvp_tol,
                    ));
                }
                None => {
                    let beta = 0.01 + rng.uniform();
                    let f = |v: &DMatrix<f64>| -> Result<f64> { Ok(reg_value(v, beta)) };
                    let g = reg_grad(&u, beta).add_scalar(offset);
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case.clone(),
                        "gradient",
                        rel_err(&g, &fd_gradient(&f, &u, 1e-6)?),
                        cfg.fd_gradient_tol,
                    ));
                    let q = reg_hess_quadform(&u, beta, &z)?;
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case.clone(),
                        "quadform",
                        rel_err_scalar(q, second_difference(&f, &u, &z, 2e-3)?),
                        cfg.fd_quadform_tol,
                    ));
                    // U D(U) with D written out independently.
                    let dvals: Vec<f64> = u
                        .column_iter()
                        .map(|c| {
                            let s = c.norm_squared();
                            (s + 2.0 * beta) / (s + beta).powf(1.5)
                        })
                        .collect();
                    let ud = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dvals));
                    let scale = ud.amax().max(f64::MIN_POSITIVE);
                    let diff = (&g - &ud).amax() / scale;
                    rows.push(CheckRow::at_most(
                        SUITE,
                        case.clone(),
                        "u-times-d",
                        diff,
                        8.0 * f64::EPSILON,
                    ));
                    let dd = d_diag(&u, beta);
                    let max_d = dd.iter().copied().fold(0.0, f64::max);
                    rows.push(CheckRow::at_most(SUITE, case, "d-bound", max_d * beta.sqrt(), 2.0));
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Largest operator norm seen along a run.
struct OpNormMax(f64);

impl TraceSink for OpNormMax {
    fn observe(&mut self, state: &IterState<'_>) -> lassoprune::Result<()> {
        self.0 = self.0.max(op_norm(state.u)?);
        Ok(())
    }
}

fn boundedness_suite(cfg: &VerifyConfig, root: &SeededRng) -> Result<Vec<CheckRow>> {
    const SUITE: &str = "boundedness";
    let runs = (0..cfg.boundedness_runs)
        .into_par_iter()
        .map(|i| -> Result<CheckRow> {
            let mut rng = root.substream(i as u64);
            let star = gen_ground_truth(cfg.boundedness_d, cfg.boundedness_r, 0.5, &mut rng)?;
            let beta = default_params(0.5, cfg.boundedness_r, cfg.boundedness_k, &Constants::default())?.beta;
            let lambda = 0.9 * beta.sqrt();
            let objective = Objective::population(star)
                .with_loss_scale(0.25)
                .with_regularizer(lambda, beta);
            let mut u0 = rng.normal_matrix(cfg.boundedness_d, cfg.boundedness_k, 1.0);
            let target = 3.0 * rng.uniform();
            u0 *= target / op_norm(&u0)?;
            let gd = GdConfig {
                step_size: 0.125,
                max_iters: cfg.boundedness_steps,
                perturbation: Perturbation::UniformBall { radius: 3.0 },
                trigger: PerturbTrigger::Always,
                grad_tol: None,
                op_norm_guard: None,
                project_perturbation: true,
                ..GdConfig::default()
            };
            let mut sink = OpNormMax(0.0);
            let u0 = lassoprune::FactorMatrix::new(u0)?;
            let out = perturbed_gd(&objective, &u0, &gd, &mut rng.substream(1), &mut sink)?;
            let max = sink.0.max(op_norm(out.u.matrix())?);
            Ok(CheckRow::at_most(SUITE, format!("run/{i}"), "max-op-norm", max, 3.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs)
}

/// Tracks the largest increase of the objective between iterates.
struct DescentWatch {
    last: Option<f64>,
    max_increase: f64,
}

impl TraceSink for DescentWatch {
    fn observe(&mut self, state: &IterState<'_>) -> lassoprune::Result<()> {
        let v = state.objective.value(state.u)?;
        if let Some(prev) = self.last {
            self.max_increase = self.max_increase.max(v - prev);
        }
        self.last = Some(v);
        Ok(())
    }
}

fn monotonicity_suite(cfg: &VerifyConfig, root: &SeededRng) -> Result<Vec<CheckRow>> {
    const SUITE: &str = "monotonicity";
    let mut rows = Vec::new();

    let mut rng = root.substream(0);
    let star = gen_ground_truth(cfg.flow_d, 1, 1.0, &mut rng)?;
    let u0 = lassoprune::FactorMatrix::new(rng.normal_matrix(cfg.flow_d, cfg.flow_d, cfg.flow_alpha0))?;
    let trace = gradient_flow(&star, &u0, cfg.flow_t_end, &FlowConfig::default())?;
    rows.push(CheckRow::at_most(
        SUITE,
        "flow".into(),
        "noise-increase",
        trace.max_noise_increase().unwrap_or(f64::INFINITY),
        cfg.flow_slack,
    ));
    rows.push(CheckRow::at_most(
        SUITE,
        "flow".into(),
        "reconstruction",
        trace.max_reconstruction_error().unwrap_or(f64::INFINITY),
        1e-10,
    ));

    for i in 0..3u64 {
        let mut rng = root.substream(1 + i);
        let (d, k) = (8, 6);
        let star = gen_ground_truth(d, 2, 0.5, &mut rng)?;
        let params = default_params(0.5, 2, k, &Constants::default())?;
        let objective = Objective::population(star).with_regularizer(params.lambda, params.beta);
        let u0 = rng.normal_matrix(d, k, 0.3);
        // Gradient Lipschitz estimate on the ball of radius max(‖U0‖_op, 1).
        let radius = op_norm(&u0)?.max(1.0);
        let lip = 4.0 * (3.0 * radius * radius + 1.0) + 2.0 * params.lambda / params.beta.sqrt();
        let gd = GdConfig {
            step_size: 1.0 / (8.0 * lip),
            max_iters: cfg.descent_steps,
            op_norm_guard: None,
            ..GdConfig::default()
        };
        let mut watch = DescentWatch {
            last: None,
            max_increase: f64::NEG_INFINITY,
        };
        perturbed_gd(
            &objective,
            &lassoprune::FactorMatrix::new(u0)?,
            &gd,
            &mut rng.substream(1),
            &mut watch,
        )?;
        rows.push(CheckRow::at_most(
            SUITE,
            format!("descent/{i}"),
            "objective-increase",
            watch.max_increase,
            cfg.descent_slack,
        ));
    }
    Ok(rows)
}

fn orthogonality_suite(cfg: &VerifyConfig, seed: u64) -> Result<Vec<CheckRow>> {
    const SUITE: &str = "orthogonality";
    let reports = (0..cfg.orthogonality_seeds as u64)
        .into_par_iter()
        .map(|i| {
            run_pipeline(&PipelineConfig {
                seed: seed.wrapping_add(i),
                ..PipelineConfig::default()
            })
        })
        .collect::<lassoprune::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rep in reports {
        let case = format!("pipeline/{}", rep.seed);
        rows.push(CheckRow::at_most(
            SUITE,
            case.clone(),
            "max-cosine",
            rep.max_surviving_cosine,
            cfg.cosine_tol,
        ));
        rows.push(CheckRow::at_most(
            SUITE,
            case,
            "survivor-excess",
            (rep.surviving_columns as f64 - rep.problem.r as f64).abs(),
            0.0,
        ));
    }
    Ok(rows)
}

fn fd_hessian(obj: &Objective, u: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = u.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut v = u.clone();
    for j in 0..n {
        let x = v[j];
        v[j] = x + h;
        let gp = obj.gradient(&v)?;
        v[j] = x - h;
        let gm = obj.gradient(&v)?;
        v[j] = x;
        let col = (gp - gm) / (2.0 * h);
        hess.column_mut(j).copy_from_slice(col.as_slice());
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

fn sosp_oracle_suite(cfg: &VerifyConfig, root: &SeededRng) -> Result<Vec<CheckRow>> {
    const SUITE: &str = "sosp-oracle";
    (0..cfg.eigen_instances)
        .into_par_iter()
        .map(|i| -> Result<CheckRow> {
            let mut rng = root.substream(i as u64);
            let (d, k, star) = random_instance(&mut rng, 14, 14)?;
            let k = k.min(200 / d).max(1);
            let family = [Family::Population, Family::Empirical, Family::QuadraticNetwork][i % 3];
            let obj = family_objective(family, &star, i, &mut rng)?
                .expect("data family")
                .with_regularizer(0.05, 0.02);
            let u = rng.normal_matrix(d, k, 0.4);
            let pair = hessian_min_eigenpair(
                &obj,
                &u,
                &EigenConfig {
                    seed: rng.next_u64(),
                    max_iters: Some(d * k),
                    ..EigenConfig::lanczos_only()
                },
            )?;
            let dense = symmetric_min_eigenvalue(&fd_hessian(&obj, &u, 1e-5)?);
            Ok(CheckRow::at_most(
                SUITE,
                format!("{}/{i}/dk={}", family.name(), d * k),
                "lambda-min-gap",
                (pair.value - dense).abs(),
                cfg.eigen_tol,
            ))
        })
        .collect()
}

pub fn compute(cfg: &VerifyConfig, seed: u64) -> Result<VerifyReport> {
    for s in &cfg.suites {
        if !SUITES.contains(&s.as_str()) {
            bail!("unknown suite `{s}` (known: {})", SUITES.join(", "));
        }
    }
    let root = SeededRng::new(seed);
    let mut checks = Vec::new();
    let mut suites = Vec::new();
    for (idx, name) in SUITES.iter().enumerate() {
        if !cfg.suites.iter().any(|s| s == name) {
            continue;
        }
        let sub = root.substream(idx as u64);
        let rows = match *name {
            "finite-difference" => finite_difference_suite(cfg, &sub)?,
            "boundedness" => boundedness_suite(cfg, &sub)?,
            "monotonicity" => monotonicity_suite(cfg, &sub)?,
            "orthogonality" => orthogonality_suite(cfg, seed)?,
            _ => sosp_oracle_suite(cfg, &sub)?,
        };
        let failures = rows.iter().filter(|r| !r.passed).count();
        suites.push(SuiteSummary {
            name: name.to_string(),
            passed: failures == 0,
            checks: rows.len(),
            failures,
        });
        checks.extend(rows);
    }
    Ok(VerifyReport {
        seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
        checks,
    })
}

pub fn command(overrides: &Overrides) -> Result<i32> {
    let (common, cfg): (Common, VerifyConfig) = resolve(overrides)?;
    setup_threads(common.threads);
    let mut out = OutputDir::create(&common.out)?;
    let report = compute(&cfg, common.seed)?;
    out.write_csv("checks.csv", &report.checks)?;
    out.write_json("report.json", &report)?;
    for s in &report.suites {
        println!(
            "{:<18} {} ({} checks, {} failed)",
            s.name,
            if s.passed { "PASS" } else { "FAIL" },
            s.checks,
            s.failures
        );
    }
    out.finish("verify", config_echo(&common, &cfg)?, vec![common.seed])?;
    Ok(if report.passed { 0 } else { 1 })
}
