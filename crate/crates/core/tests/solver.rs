use lassoprune::linalg::symmetric_min_eigenvalue;
use lassoprune::sensing::gen_ground_truth;
use lassoprune::solver::{
    active_column_census, dense_hessian, gradient_flow, hessian_min_eigenpair, perturbed_gd, EigenConfig, FlowConfig,
    GdConfig, NullSink, Perturbation, TraceRecorder,
};
use lassoprune::{Error, FactorMatrix, Objective, SeededRng};
use nalgebra::DMatrix;

fn small_start(d: usize, k: usize, scale: f64, seed: u64) -> FactorMatrix {
    FactorMatrix::new(SeededRng::new(seed).normal_matrix(d, k, scale)).unwrap()
}

#[test]
fn unperturbed_gd_is_deterministic_and_descends() {
    let mut rng = SeededRng::new(1);
    let star = gen_ground_truth(6, 2, 0.5, &mut rng).unwrap();
    let obj = Objective::population(star.clone()).with_regularizer(0.05, 0.01);
    let u0 = small_start(6, 4, 0.1, 2);
    let cfg = GdConfig {
        step_size: 0.02,
        max_iters: 3000,
        ..GdConfig::default()
    };
    let mut a = TraceRecorder::new(1);
    let mut b = TraceRecorder::new(1);
    let ra = perturbed_gd(&obj, &u0, &cfg, &mut SeededRng::new(9), &mut a).unwrap();
    let rb = perturbed_gd(&obj, &u0, &cfg, &mut SeededRng::new(10), &mut b).unwrap();
    assert_eq!(ra.u, rb.u);
    assert_eq!(ra.perturbations, 0);
    for w in a.records.windows(2) {
        assert!(w[1].loss <= w[0].loss + 1e-12, "{} -> {}", w[0].loss, w[1].loss);
    }
}

#[test]
fn op_norm_guard_reports_violation() {
    let mut rng = SeededRng::new(2);
    let star = gen_ground_truth(4, 1, 1.0, &mut rng).unwrap();
    let obj = Objective::population(star);
    let u0 = small_start(4, 2, 1.0, 3);
    let cfg = GdConfig {
        step_size: 5.0,
        max_iters: 50,
        ..GdConfig::default()
    };
    match perturbed_gd(&obj, &u0, &cfg, &mut rng, &mut NullSink) {
        Err(Error::GuardViolation { .. }) | Err(Error::NonFinite(_)) => {}
        other => panic!("expected a guard failure, got {other:?}"),
    }
}

#[test]
fn same_seed_same_perturbations() {
    let mut rng = SeededRng::new(3);
    let star = gen_ground_truth(5, 2, 0.5, &mut rng).unwrap();
    let obj = Objective::population(star).with_regularizer(0.05, 0.01);
    let u0 = small_start(5, 3, 0.05, 4);
    let cfg = GdConfig {
        step_size: 0.01,
        max_iters: 200,
        perturbation: Perturbation::UniformBall { radius: 0.01 },
        ..GdConfig::default()
    };
    let a = perturbed_gd(&obj, &u0, &cfg, &mut SeededRng::new(7), &mut NullSink).unwrap();
    let b = perturbed_gd(&obj, &u0, &cfg, &mut SeededRng::new(7), &mut NullSink).unwrap();
    let c = perturbed_gd(&obj, &u0, &cfg, &mut SeededRng::new(8), &mut NullSink).unwrap();
    assert_eq!(a.u, b.u);
    assert_ne!(a.u, c.u);
}

#[test]
fn flow_keeps_columns_in_the_star_span_when_started_there() {
    let mut rng = SeededRng::new(4);
    let star = gen_ground_truth(6, 1, 1.0, &mut rng).unwrap();
    let u_star = star.factor().matrix().column(0).into_owned();
    let coeffs = DMatrix::from_row_slice(1, 3, &[0.01, -0.02, 0.005]);
    let u0 = FactorMatrix::new(&u_star * coeffs).unwrap();
    let trace = gradient_flow(&star, &u0, 50.0, &FlowConfig::default()).unwrap();
    let u = trace.final_u.matrix();
    let off = u - &u_star * (u_star.transpose() * u);
    assert!(off.norm() < 1e-12);
    assert!(trace.last().gram_error < 1e-6);
}

#[test]
fn flow_rejects_mismatched_rows() {
    let mut rng = SeededRng::new(5);
    let star = gen_ground_truth(4, 1, 1.0, &mut rng).unwrap();
    let u0 = small_start(5, 2, 0.1, 1);
    assert!(matches!(
        gradient_flow(&star, &u0, 1.0, &FlowConfig::default()),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn origin_is_a_strict_saddle() {
    let mut rng = SeededRng::new(6);
    let star = gen_ground_truth(4, 2, 0.5, &mut rng).unwrap();
    let obj = Objective::population(star.clone());
    let zero = DMatrix::zeros(4, 3);
    let pair = hessian_min_eigenpair(&obj, &zero, &EigenConfig::default()).unwrap();
    let dense = symmetric_min_eigenvalue(&dense_hessian(&obj, &zero).unwrap());
    assert!((pair.value - dense).abs() < 1e-8);
    assert!((dense + 4.0 * star.sigma_one().powi(2)).abs() < 1e-8, "{dense}");
}

#[test]
fn lanczos_matches_dense_on_a_random_point() {
    let mut rng = SeededRng::new(7);
    let star = gen_ground_truth(8, 2, 0.5, &mut rng).unwrap();
    let obj = Objective::population(star).with_regularizer(0.1, 0.02);
    let u = rng.normal_matrix(8, 5, 0.3);
    let cfg = EigenConfig {
        max_iters: Some(40),
        ..EigenConfig::lanczos_only()
    };
    let pair = hessian_min_eigenpair(&obj, &u, &cfg).unwrap();
    let dense = symmetric_min_eigenvalue(&dense_hessian(&obj, &u).unwrap());
    assert!(pair.converged);
    assert!((pair.value - dense).abs() < 1e-6, "{} vs {dense}", pair.value);
}

#[test]
fn census_counts_columns_over_threshold() {
    let u = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 0.1, 0.6, 0.8]);
    let census = active_column_census(&u, 0.5).unwrap();
    assert_eq!(census.count, 2);
    assert_eq!(census.indices, vec![0, 2]);
}
