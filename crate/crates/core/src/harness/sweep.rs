//! Seeded multi-simulation sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::SweepConfig;
use crate::analysis::{
    convergence_episode, cumulative_regret, decomposition_diagnostic, finite_sample_threshold,
    radius_consistency_check, regret_bound_violations, theoretical_regret_bound, convergence_threshold,
    DecompositionReport, RadiusReport, DIAGNOSTIC_TOLERANCE,
};
use crate::environments::{
    compute_gamma, compute_h, generate_fixed_gap_prototypes, generate_random_prototypes, GridWorld, PrototypeMode,
};
use crate::error::{Error, Result};
use crate::learning::{run_learner, Algorithm};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "PROTO_RMDP_THREADS";

/// Condensed outcome of one learner on one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub rewards: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub convergence_episode: Option<usize>,
    /// Truth inside the ambiguity set at every episode; `None` for learners
    /// without an ambiguity set.
    pub coverage_all_t: Option<bool>,
    pub coverage_rate: Option<f64>,
    pub decomposition: DecompositionReport,
    pub radius: RadiusReport,
    pub bound_violations: usize,
    /// Frozen episodes with nonzero regret.
    pub frozen_regret_violations: usize,
    pub coverage_losses: usize,
}

impl RunSummary {
    pub fn final_reward(&self) -> f64 {
        self.rewards.last().copied().unwrap_or(0.0)
    }

    /// Cumulative regret after `t` episodes.
    pub fn regret_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.cumulative_regret[t - 1]
        }
    }
}

/// One simulation: the drawn instance and every learner's run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub sim: usize,
    pub seed: u64,
    pub instance: String,
    pub optimal_reward: f64,
    pub gamma: f64,
    pub gamma_strict: f64,
    pub h: f64,
    pub regret_bound_final: Option<f64>,
    pub finite_sample_threshold: Option<u64>,
    pub convergence_threshold: Option<u64>,
    pub runs: Vec<RunSummary>,
}

/// Across-simulation statistics of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmCurve {
    pub algorithm: Algorithm,
    pub mean_reward: Vec<f64>,
    /// Sample standard deviation; 0 for a single simulation.
    pub std_reward: Vec<f64>,
    pub mean_cumulative_regret: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub curves: Vec<AlgorithmCurve>,
    pub simulations: Vec<SimulationResult>,
}

impl SweepResult {
    pub fn curve(&self, algorithm: Algorithm) -> Option<&AlgorithmCurve> {
        self.curves.iter().find(|c| c.algorithm == algorithm)
    }

    /// Per-simulation runs of `algorithm`, in simulation order.
    pub fn runs(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunSummary> {
        self.simulations
            .iter()
            .filter_map(move |s| s.runs.iter().find(|r| r.algorithm == algorithm))
    }
}

/// Instance for simulation seed `seed`. Families are drawn from stream 0 of
/// the seed; learners use their own streams.
pub fn draw_instance(config: &SweepConfig, seed: u64) -> Result<GridWorld> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut world = match config.mode {
        PrototypeMode::FixedGap => generate_fixed_gap_prototypes(config.prototypes, config.gap, config.sharing, &mut rng)?,
        PrototypeMode::Random => generate_random_prototypes(config.prototypes, config.sharing, &mut rng)?,
    };
    world.spec.seed = Some(seed);
    Ok(world)
}

fn simulate(config: &SweepConfig, sim: usize) -> Result<SimulationResult> {
    let seed = config.seed.wrapping_add(sim as u64);
    let world = draw_instance(config, seed)?;
    let (mdp, family) = (&world.mdp, &world.family);
    let layout = mdp.layout();
    let (l, s, a) = (layout.num_layers(), layout.num_states(), mdp.num_actions());
    let gamma = compute_gamma(family, mdp);
    let h = compute_h(family, mdp).h;
    let r_max = mdp.max_reward();
    let bound = theoretical_regret_bound(l, gamma.value, s, a, config.episodes, config.delta, r_max);
    let experiment = config.experiment(seed);

    let mut optimal_reward = 0.0;
    let mut runs = Vec::with_capacity(config.algorithms.len());
    for &algorithm in &config.algorithms {
        let records = run_learner(algorithm, mdp, family, &experiment)?;
        optimal_reward = records[0].expected_reward + records[0].regret;
        let cumulative = cumulative_regret(&records);
        let flags: Vec<bool> = records.iter().filter_map(|r| r.covered).collect();
        let coverage_rate =
            (!flags.is_empty()).then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64);
        let tracks_sets = algorithm == Algorithm::RpoAas;
        runs.push(RunSummary {
            algorithm,
            rewards: records.iter().map(|r| r.expected_reward).collect(),
            convergence_episode: if tracks_sets { convergence_episode(&records) } else { None },
            coverage_all_t: (!flags.is_empty()).then(|| flags.iter().all(|&c| c)),
            coverage_rate,
            decomposition: decomposition_diagnostic(&records),
            radius: radius_consistency_check(&records, family, mdp, config.episodes, config.delta),
            bound_violations: match (&bound, tracks_sets) {
                (Some(b), true) => regret_bound_violations(&records, &cumulative, b),
                _ => 0,
            },
            frozen_regret_violations: records
                .iter()
                .filter(|r| r.frozen && r.regret.abs() > DIAGNOSTIC_TOLERANCE)
                .count(),
            coverage_losses: records.iter().filter(|r| r.coverage_loss).count(),
            cumulative_regret: cumulative,
        });
    }
    Ok(SimulationResult {
        sim,
        seed,
        instance: world.spec.to_text(),
        optimal_reward,
        gamma: gamma.value,
        gamma_strict: gamma.strict(),
        h,
        regret_bound_final: bound.as_ref().and_then(|b| b.last().copied()),
        finite_sample_threshold: finite_sample_threshold(
            l,
            gamma.value,
            s,
            a,
            config.episodes,
            config.delta,
            config.epsilon,
            r_max,
        ),
        convergence_threshold: convergence_threshold(s, a, l, config.episodes, config.delta, h),
        runs,
    })
}

fn mean_and_std(columns: &[&[f64]], t: usize) -> (f64, f64) {
    let n = columns.len() as f64;
    let mean = columns.iter().map(|c| c[t]).sum::<f64>() / n;
    if columns.len() < 2 {
        return (mean, 0.0);
    }
    let var = columns.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(config: &SweepConfig, simulations: &[SimulationResult]) -> Vec<AlgorithmCurve> {
    config
        .algorithms
        .iter()
        .enumerate()
        .map(|(i, &algorithm)| {
            let rewards: Vec<&[f64]> = simulations.iter().map(|s| s.runs[i].rewards.as_slice()).collect();
            let regrets: Vec<&[f64]> = simulations
                .iter()
                .map(|s| s.runs[i].cumulative_regret.as_slice())
                .collect();
            let mut curve = AlgorithmCurve {
                algorithm,
                mean_reward: Vec::with_capacity(config.episodes),
                std_reward: Vec::with_capacity(config.episodes),
                mean_cumulative_regret: Vec::with_capacity(config.episodes),
            };
            if simulations.is_empty() {
                return curve;
            }
            for t in 0..config.episodes {
                let (m, sd) = mean_and_std(&rewards, t);
                curve.mean_reward.push(m);
                curve.std_reward.push(sd);
                curve.mean_cumulative_regret.push(mean_and_std(&regrets, t).0);
            }
            curve
        })
        .collect()
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every simulation of `config` on a pool of `threads` workers (rayon's
/// default when `None`). The result does not depend on the pool size.
pub fn run_sweep_with_threads(config: &SweepConfig, threads: Option<usize>) -> Result<SweepResult> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Parameter {
        name: "threads",
        reason: e.to_string(),
    })?;
    let simulations: Vec<SimulationResult> = pool.install(|| {
        (0..config.sims)
            .into_par_iter()
            .map(|sim| simulate(config, sim))
            .collect::<Result<_>>()
    })?;
    Ok(SweepResult {
        curves: aggregate(config, &simulations),
        simulations,
        config: config.clone(),
    })
}

/// [`run_sweep_with_threads`] with the pool size taken from the environment.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with_threads(config, threads_from_env())
}
