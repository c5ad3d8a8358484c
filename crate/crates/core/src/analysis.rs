//! Regret bookkeeping, closed-form bounds and per-episode diagnostics.
//!
//! The bounds are stated for rewards in `[0, 1]`; every calculator takes
//! `r_max` and rescales so that they apply to rewards in `[0, r_max]`.

use crate::environments::{compute_gamma, compute_h, compute_layer_gamma};
use crate::family::PrototypeFamily;
use crate::learning::EpisodeRecord;
use crate::mdp::LayeredMdp;

/// Slack for comparisons between exact quantities.
pub const DIAGNOSTIC_TOLERANCE: f64 = 1e-9;

fn log_term(num_layers: usize, episodes: usize, delta: f64) -> f64 {
    (3.0 * num_layers as f64 * episodes as f64 / delta).ln()
}

/// Prefix sums of the per-episode regret.
pub fn cumulative_regret(records: &[EpisodeRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.regret;
            Some(*acc)
        })
        .collect()
}

/// `r_max L² γ √(4 t |S| |A| ln(3LT/δ))` for `t = 1..=T`; `None` when `γ`
/// is infinite.
pub fn theoretical_regret_bound(
    num_layers: usize,
    gamma: f64,
    num_states: usize,
    num_actions: usize,
    episodes: usize,
    delta: f64,
    r_max: f64,
) -> Option<Vec<f64>> {
    if !gamma.is_finite() {
        return None;
    }
    let l = num_layers as f64;
    let scale = r_max * l * l * gamma;
    let per_t = 4.0 * (num_states * num_actions) as f64 * log_term(num_layers, episodes, delta);
    Some((1..=episodes).map(|t| scale * (per_t * t as f64).sqrt()).collect())
}

/// Smallest `t ≥ 1` with `t ≥ 4 L⁴ γ² |S| |A| ln(3LT/δ) / (ε / r_max)²`.
pub fn finite_sample_threshold(
    num_layers: usize,
    gamma: f64,
    num_states: usize,
    num_actions: usize,
    episodes: usize,
    delta: f64,
    epsilon: f64,
    r_max: f64,
) -> Option<u64> {
    if !gamma.is_finite() || !(epsilon > 0.0) {
        return None;
    }
    let l = num_layers as f64;
    let eps = epsilon / r_max;
    let value = 4.0 * l.powi(4) * gamma * gamma * (num_states * num_actions) as f64
        * log_term(num_layers, episodes, delta)
        / (eps * eps);
    Some((value.ceil() as u64).max(1))
}

/// `⌈8 |S|² |A| ln(3LT/δ) / h⌉`; `None` for a degenerate `h ≤ 0`, 1 when
/// there is nothing to eliminate (`h` infinite).
pub fn convergence_threshold(
    num_states: usize,
    num_actions: usize,
    num_layers: usize,
    episodes: usize,
    delta: f64,
    h: f64,
) -> Option<u64> {
    if !(h > 0.0) {
        return None;
    }
    if h.is_infinite() {
        return Some(1);
    }
    let s = num_states as f64;
    let value = 8.0 * s * s * num_actions as f64 * log_term(num_layers, episodes, delta) / h;
    Some((value.ceil() as u64).max(1))
}

/// Outcome of [`radius_consistency_check`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadiusReport {
    /// Covered `(episode, layer)` pairs tested.
    pub checked: usize,
    /// Pairs where a survivor is farther from the truth than
    /// `4 γ_l √(|S_{l+1}| |S_l| |A| ln(3LT/δ) / t)`.
    pub violations: usize,
    /// Covered pairs skipped because `γ_l` is infinite in that layer.
    pub unchecked: usize,
    /// Violations of the tighter `γ_l √(4 |S_{l+1}| |S_l| |A| ln(3LT/δ) / t)`.
    pub tight_violations: usize,
    /// Violations of the main bound with the family-wide `γ` of
    /// [`compute_gamma`] in every layer.
    pub pooled_violations: usize,
    /// Largest `‖P_t(s, a) − P_0(s, a)‖₁` over covered episodes.
    pub max_xi: f64,
}

impl RadiusReport {
    pub fn merge(&mut self, other: &RadiusReport) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.unchecked += other.unchecked;
        self.tight_violations += other.tight_violations;
        self.pooled_violations += other.pooled_violations;
        self.max_xi = self.max_xi.max(other.max_xi);
    }
}

/// Checks, for every covered episode, that all surviving prototypes are
/// within the shrinking distance of the truth that elimination guarantees.
pub fn radius_consistency_check(
    records: &[EpisodeRecord],
    family: &PrototypeFamily,
    mdp: &LayeredMdp,
    episodes: usize,
    delta: f64,
) -> RadiusReport {
    let layout = mdp.layout();
    let layer_gamma = compute_layer_gamma(family, mdp);
    let pooled = compute_gamma(family, mdp).value;
    let log = log_term(layout.num_layers(), episodes, delta);
    let mut report = RadiusReport::default();
    for r in records {
        if r.covered != Some(true) || r.survivor_gap.is_empty() {
            continue;
        }
        if let Some(xi) = r.xi_max {
            report.max_xi = report.max_xi.max(xi);
        }
        for (l, &gap) in r.survivor_gap.iter().enumerate() {
            let size = (layout.layer_size(l + 1) * layout.layer_size(l) * mdp.num_actions()) as f64;
            let root = (size * log / r.episode as f64).sqrt();
            let exceeds = |bound: f64| gap > bound + DIAGNOSTIC_TOLERANCE;
            if exceeds(4.0 * pooled * root) {
                report.pooled_violations += 1;
            }
            let gamma = layer_gamma[l];
            if !gamma.is_finite() {
                report.unchecked += 1;
                continue;
            }
            report.checked += 1;
            if exceeds(4.0 * gamma * root) {
                report.violations += 1;
            }
            if exceeds(2.0 * gamma * root) {
                report.tight_violations += 1;
            }
        }
    }
    report
}

/// Outcome of [`decomposition_diagnostic`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecompositionReport {
    pub checked: usize,
    pub violations: usize,
}

impl DecompositionReport {
    pub fn merge(&mut self, other: &DecompositionReport) {
        self.checked += other.checked;
        self.violations += other.violations;
    }
}

/// Sign checks of the regret decomposition: for robust planners the lower
/// bound may not exceed the true reward while the truth is covered; for
/// nominal planners `R(π*, P_t) − R(π_t, P_t)` may not be positive.
pub fn decomposition_diagnostic(records: &[EpisodeRecord]) -> DecompositionReport {
    let mut report = DecompositionReport::default();
    for r in records {
        if let (Some(bound), Some(true)) = (r.robust_lower_bound, r.covered) {
            report.checked += 1;
            if bound > r.expected_reward + DIAGNOSTIC_TOLERANCE {
                report.violations += 1;
            }
        }
        if let Some(middle) = r.middle_term {
            report.checked += 1;
            if middle > DIAGNOSTIC_TOLERANCE {
                report.violations += 1;
            }
        }
    }
    report
}

/// Covered episodes whose cumulative regret exceeds the bound.
pub fn regret_bound_violations(records: &[EpisodeRecord], cumulative: &[f64], bound: &[f64]) -> usize {
    records
        .iter()
        .zip(cumulative)
        .zip(bound)
        .filter(|((r, &c), &b)| r.covered != Some(false) && c > b + DIAGNOSTIC_TOLERANCE)
        .count()
}

/// First episode from which every layer keeps a single candidate.
pub fn convergence_episode(records: &[EpisodeRecord]) -> Option<usize> {
    records
        .iter()
        .find(|r| !r.candidates.is_empty() && r.candidates.iter().all(|&c| c == 1))
        .map(|r| r.episode)
}

/// Bound values and diagnostics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub cumulative_regret: Vec<f64>,
    pub theoretical_regret_bound: Option<Vec<f64>>,
    pub finite_sample_threshold: Option<u64>,
    pub convergence_threshold: Option<u64>,
    /// Fraction of episodes with the truth inside the ambiguity set.
    pub coverage_rate: Option<f64>,
    pub decomposition: DecompositionReport,
    pub radius: RadiusReport,
    pub bound_violations: usize,
    pub gamma: f64,
    pub h: f64,
    pub r_max: f64,
}

/// Parameters of the bound calculators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub episodes: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl AnalysisReport {
    pub fn build(records: &[EpisodeRecord], family: &PrototypeFamily, mdp: &LayeredMdp, params: BoundParams) -> Self {
        let layout = mdp.layout();
        let (l, s, a) = (layout.num_layers(), layout.num_states(), mdp.num_actions());
        let gamma = compute_gamma(family, mdp).value;
        let h = compute_h(family, mdp).h;
        let r_max = mdp.max_reward();
        let cumulative = cumulative_regret(records);
        let bound = theoretical_regret_bound(l, gamma, s, a, params.episodes, params.delta, r_max);
        let bound_violations = bound
            .as_ref()
            .map_or(0, |b| regret_bound_violations(records, &cumulative, b));
        let flags: Vec<bool> = records.iter().filter_map(|r| r.covered).collect();
        let coverage_rate =
            (!flags.is_empty()).then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64);
        Self {
            finite_sample_threshold: finite_sample_threshold(
                l,
                gamma,
                s,
                a,
                params.episodes,
                params.delta,
                params.epsilon,
                r_max,
            ),
            convergence_threshold: convergence_threshold(s, a, l, params.episodes, params.delta, h),
            coverage_rate,
            decomposition: decomposition_diagnostic(records),
            radius: radius_consistency_check(records, family, mdp, params.episodes, params.delta),
            bound_violations,
            cumulative_regret: cumulative,
            theoretical_regret_bound: bound,
            gamma,
            h,
            r_max,
        }
    }
}
