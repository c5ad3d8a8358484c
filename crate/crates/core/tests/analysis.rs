use proto_rmdp::analysis::{
    convergence_threshold, cumulative_regret, decomposition_diagnostic, finite_sample_threshold,
    radius_consistency_check, theoretical_regret_bound, AnalysisReport, BoundParams,
};
use proto_rmdp::environments::{generate_fixed_gap_prototypes, Sharing};
use proto_rmdp::learning::{learner_rng, run_learner, Algorithm, ExperimentConfig, Learner};
use proto_rmdp::mdp::value_function;
use proto_rmdp::planning::optimal_policy_dp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(episodes: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        episodes,
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn cumulative_regret_matches_value_differences() {
    let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let (mdp, family) = (&world.mdp, &world.family);
    let cfg = config(400, 8);
    let (_, optimal) = optimal_policy_dp(mdp.true_kernel(), mdp);
    for algorithm in [Algorithm::RpoAas, Algorithm::NrpoNpc, Algorithm::Ucbvi] {
        let mut learner = Learner::new(algorithm, mdp, family, &cfg).unwrap();
        let mut rng = learner_rng(algorithm, 8);
        let mut records = Vec::new();
        let mut independent = 0.0;
        for _ in 0..400 {
            records.push(learner.step(&mut rng).unwrap());
            let v = value_function(&learner.state().policy, mdp.true_kernel(), mdp).unwrap()[0];
            independent += optimal[0] - v;
        }
        let cumulative = cumulative_regret(&records);
        assert!((cumulative[399] - independent).abs() <= 1e-9, "{algorithm}");
    }
}

#[test]
fn regret_bound_at_benchmark_scale() {
    let bound = theoretical_regret_bound(8, 1.0, 20, 2, 5000, 0.05, 5.0).unwrap();
    assert_eq!(bound.len(), 5000);
    let log = (3.0 * 8.0 * 5000.0 / 0.05f64).ln();
    let expected = 5.0 * 64.0 * (4.0 * 5000.0 * 40.0 * log).sqrt();
    assert!((bound[4999] - expected).abs() <= 1e-9 * expected);
    assert!(theoretical_regret_bound(8, f64::INFINITY, 20, 2, 5000, 0.05, 5.0).is_none());
}

#[test]
fn finite_sample_threshold_at_benchmark_scale() {
    let t = finite_sample_threshold(8, 1.0, 20, 2, 3000, 0.05, 1.0, 5.0).unwrap();
    let log = (3.0 * 8.0 * 3000.0 / 0.05f64).ln();
    let expected = 4.0 * 4096.0 * 40.0 * log / (0.2f64 * 0.2);
    assert_eq!(t, expected.ceil() as u64);
    assert!(finite_sample_threshold(8, f64::INFINITY, 20, 2, 3000, 0.05, 1.0, 5.0).is_none());
}

#[test]
fn convergence_threshold_is_far_beyond_desk_scale() {
    let t = convergence_threshold(20, 2, 8, 5000, 0.05, 0.4).unwrap();
    let log = (3.0 * 8.0 * 5000.0 / 0.05f64).ln();
    assert_eq!(t, (8.0 * 400.0 * 2.0 * log / 0.4).ceil() as u64);
    assert!(t > 5000);
    assert_eq!(convergence_threshold(20, 2, 8, 5000, 0.05, 0.0), None);
    assert_eq!(convergence_threshold(20, 2, 8, 5000, 0.05, f64::INFINITY), Some(1));
}

#[test]
fn diagnostics_are_clean_on_fixed_gap_runs() {
    for seed in 0..40 {
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let records = run_learner(Algorithm::RpoAas, &world.mdp, &world.family, &config(300, seed)).unwrap();
        let radius = radius_consistency_check(&records, &world.family, &world.mdp, 300, 0.05);
        assert_eq!(radius.violations, 0, "seed {seed}");
        assert!(radius.checked > 0);
        assert_eq!(decomposition_diagnostic(&records).violations, 0);

        let nominal = run_learner(Algorithm::NrpoNpc, &world.mdp, &world.family, &config(300, seed)).unwrap();
        assert_eq!(decomposition_diagnostic(&nominal).violations, 0);
    }
}

#[test]
fn report_collects_run_metrics() {
    let world = generate_fixed_gap_prototypes(4, 0.25, Sharing::Shared, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let records = run_learner(Algorithm::RpoAas, &world.mdp, &world.family, &config(200, 2)).unwrap();
    let report = AnalysisReport::build(
        &records,
        &world.family,
        &world.mdp,
        BoundParams {
            episodes: 200,
            delta: 0.05,
            epsilon: 1.0,
        },
    );
    assert_eq!(report.r_max, 5.0);
    assert!((report.h - 0.5).abs() < 1e-12);
    assert_eq!(report.coverage_rate, Some(1.0));
    assert_eq!(report.bound_violations, 0);
    assert_eq!(report.theoretical_regret_bound.as_ref().map(Vec::len), Some(200));
}
