use lassoprune::linalg::gram_error;
use lassoprune::pipeline::{
    build_instance, run_pipeline, run_pipeline_on, PhaseTimings, PipelineConfig, ProblemConfig, ProblemMode,
};

fn small(mode: ProblemMode, seed: u64) -> PipelineConfig {
    PipelineConfig {
        problem: ProblemConfig {
            d: 8,
            k: 6,
            r: 2,
            mode,
            ..ProblemConfig::default()
        },
        seed,
        ..PipelineConfig::default()
    }
}

#[test]
fn reports_are_reproducible_up_to_timings() {
    for mode in [ProblemMode::Population, ProblemMode::Empirical { n: 300 }] {
        let mut a = run_pipeline(&small(mode, 11)).unwrap();
        let mut b = run_pipeline(&small(mode, 11)).unwrap();
        a.timings = PhaseTimings::default();
        b.timings = PhaseTimings::default();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let c: lassoprune::pipeline::PipelineReport = serde_json::from_str(&json).unwrap();
        assert_eq!(a, c);
    }
}

#[test]
fn population_pipeline_recovers_the_rank() {
    let cfg = small(ProblemMode::Population, 3);
    let instance = build_instance(&cfg.problem, cfg.seed).unwrap();
    let run = run_pipeline_on(&cfg, &instance).unwrap();
    let report = &run.report;
    assert_eq!(report.surviving_columns, 2);
    assert!(report.prune.identity_holds);
    assert!(
        report.gram_error_after_finetune < 1e-6,
        "{}",
        report.gram_error_after_finetune
    );
    assert_eq!(run.pruned.cols(), 2);
    let direct = gram_error(run.fine_tuned.matrix(), &instance.star).unwrap();
    assert!((direct - report.gram_error_after_finetune).abs() < 1e-12);
    assert!(report.sosp.as_ref().unwrap().certified());
}

#[test]
fn pruned_columns_were_below_threshold() {
    let report = run_pipeline(&small(ProblemMode::Population, 5)).unwrap();
    let t = report.prune.threshold;
    for &i in &report.prune.pruned_indices {
        assert!(report.prune.column_norms[i] <= t);
    }
    for &i in &report.prune.kept_indices {
        assert!(report.prune.column_norms[i] > t);
    }
    assert!((t - 2.0 * report.params.beta.sqrt()).abs() < 1e-15);
}

#[test]
fn different_seeds_draw_different_problems() {
    let a = build_instance(&small(ProblemMode::Population, 1).problem, 1).unwrap();
    let b = build_instance(&small(ProblemMode::Population, 2).problem, 2).unwrap();
    assert_ne!(a.star.gram(), b.star.gram());
}
