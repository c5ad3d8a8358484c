//! Online learners over a prototype family: adaptive elimination (RPO-AAS),
//! nearest-prototype planners (NRPO-NPC, NRPO-NPC2), an optimistic UCBVI
//! baseline and a fixed optimal-policy oracle.
//!
//! All learners share the same episode loop: plan from the counts of the
//! completed episodes, run one episode under the true kernel, record it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::family::PrototypeFamily;
use crate::mdp::{l1, sample_trajectory, value_function, LayerLayout, LayeredMdp, Policy, Step, TransitionKernel};
use crate::occupancy::{expected_reward, occupancy_from};
use crate::planning::{optimal_policy_dp, robust_policy_dp, CandidateSets};

/// Learner identifiers as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    RpoAas,
    NrpoNpc,
    NrpoNpc2,
    Ucbvi,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::RpoAas,
        Algorithm::NrpoNpc,
        Algorithm::NrpoNpc2,
        Algorithm::Ucbvi,
        Algorithm::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::RpoAas => "rpo-aas",
            Algorithm::NrpoNpc => "nrpo-npc",
            Algorithm::NrpoNpc2 => "nrpo-npc2",
            Algorithm::Ucbvi => "ucbvi",
            Algorithm::Oracle => "oracle",
        }
    }

    /// Stable small integer, used to derive independent random streams.
    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|&a| a == self).unwrap() as u64
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected one of rpo-aas, nrpo-npc, nrpo-npc2, ucbvi, oracle)"))
    }
}

/// How the pair tested for elimination is chosen in each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorRule {
    /// Most visited pair among those where the candidates still disagree;
    /// falls back to [`AnchorRule::MostVisited`] when they agree everywhere.
    Informative,
    /// Most visited pair of the layer.
    MostVisited,
}

impl AnchorRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AnchorRule::Informative => "informative",
            AnchorRule::MostVisited => "most-visited",
        }
    }
}

impl FromStr for AnchorRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "informative" => Ok(AnchorRule::Informative),
            "most-visited" => Ok(AnchorRule::MostVisited),
            _ => Err(format!("unknown anchor rule `{s}` (expected informative or most-visited)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub episodes: usize,
    pub delta: f64,
    pub seed: u64,
    pub early_stop: bool,
    pub ucbvi_bonus_scale: f64,
    pub anchor: AnchorRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            episodes: 3000,
            delta: 0.05,
            seed: 0,
            early_stop: false,
            ucbvi_bonus_scale: 1.0,
            anchor: AnchorRule::Informative,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Parameter {
                name: "episodes",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter {
                name: "delta",
                reason: format!("{} is outside (0, 1)", self.delta),
            });
        }
        if !(self.ucbvi_bonus_scale > 0.0 && self.ucbvi_bonus_scale.is_finite()) {
            return Err(Error::Parameter {
                name: "ucbvi_bonus_scale",
                reason: format!("{} is not a positive number", self.ucbvi_bonus_scale),
            });
        }
        Ok(())
    }
}

/// `√(4 |S_{l+1}| ln(3LT/δ) / n)`, infinite when `n = 0`.
pub fn hoeffding_radius(succ_layer_size: usize, num_layers: usize, episodes: usize, delta: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let log = (3.0 * num_layers as f64 * episodes as f64 / delta).ln();
    (4.0 * succ_layer_size as f64 * log / n as f64).sqrt()
}

/// The fallback of an elimination that would have rejected every candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageLoss {
    pub episode: usize,
    pub layer: usize,
}

/// Counts, surviving candidates and current policy of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    layout: LayerLayout,
    num_actions: usize,
    counts: Vec<Vec<u64>>,
    transition_counts: Vec<Vec<Vec<u64>>>,
    pub surviving: Vec<Vec<usize>>,
    pub policy: Policy,
    /// Completed episodes.
    pub episode: usize,
    pub frozen: bool,
    pub coverage_losses: Vec<CoverageLoss>,
    frozen_plan: Option<Plan>,
}

impl LearnerState {
    /// Fresh state with every prototype of `family` alive.
    pub fn new(family: &PrototypeFamily) -> Self {
        let layout = family.layout().clone();
        let num_actions = family.num_actions();
        let n = layout.num_states();
        let d = layout.num_decision_states();
        Self {
            counts: vec![vec![0; num_actions]; d],
            transition_counts: vec![vec![vec![0; n]; num_actions]; d],
            surviving: (0..family.num_layers()).map(|l| (0..family.len(l)).collect()).collect(),
            policy: Policy::first_action(&layout),
            episode: 0,
            frozen: false,
            coverage_losses: Vec::new(),
            frozen_plan: None,
            layout,
            num_actions,
        }
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn count(&self, state: usize, action: usize) -> u64 {
        self.counts[state][action]
    }

    pub fn transition_count(&self, state: usize, action: usize, next: usize) -> u64 {
        self.transition_counts[state][action][next]
    }

    /// `N(s, a, ·) / N(s, a)` over the global state table, or `None` before
    /// the first visit.
    pub fn empirical_row(&self, state: usize, action: usize) -> Option<Vec<f64>> {
        let n = self.counts[state][action];
        (n > 0).then(|| {
            self.transition_counts[state][action]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect()
        })
    }

    /// Total visits to the pairs of `layer`.
    pub fn layer_visits(&self, layer: usize) -> u64 {
        self.layout.layer_states(layer).map(|s| self.counts[s].iter().sum::<u64>()).sum()
    }

    /// Adds one episode to the counts.
    pub fn record(&mut self, trajectory: &[Step]) {
        for step in trajectory {
            self.counts[step.state][step.action] += 1;
            self.transition_counts[step.state][step.action][step.next] += 1;
        }
        self.episode += 1;
    }

    fn pairs(&self, layer: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let a = self.num_actions;
        self.layout.layer_states(layer).flat_map(move |s| (0..a).map(move |b| (s, b)))
    }

    fn most_visited(&self, pairs: impl Iterator<Item = (usize, usize)>) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), u64)> = None;
        for (s, a) in pairs {
            let n = self.counts[s][a];
            if best.is_none_or(|(_, m)| n > m) {
                best = Some(((s, a), n));
            }
        }
        best.map(|(pair, _)| pair)
    }
}

/// Most visited pair of `layer`; ties go to the smallest `(state, action)`.
pub fn select_anchor_pair(state: &LearnerState, layer: usize) -> (usize, usize) {
    state.most_visited(state.pairs(layer)).expect("layers are non-empty")
}

/// Whether the rows of `candidates` at `(s, a)` are not all equal.
fn candidates_disagree(family: &PrototypeFamily, candidates: &[usize], s: usize, a: usize) -> bool {
    let first = family.row(candidates[0], s, a);
    candidates[1..].iter().any(|&k| family.row(k, s, a) != first)
}

/// Anchor under `rule` for the candidate list `candidates` of `layer`.
pub fn select_anchor(
    state: &LearnerState,
    family: &PrototypeFamily,
    layer: usize,
    candidates: &[usize],
    rule: AnchorRule,
) -> (usize, usize) {
    match rule {
        AnchorRule::MostVisited => select_anchor_pair(state, layer),
        AnchorRule::Informative => state
            .most_visited(
                state
                    .pairs(layer)
                    .filter(|&(s, a)| candidates_disagree(family, candidates, s, a)),
            )
            .unwrap_or_else(|| select_anchor_pair(state, layer)),
    }
}

/// Outcome of one elimination test.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub kept: Vec<usize>,
    /// Every candidate failed the test and the nearest one was retained.
    pub coverage_loss: bool,
}

/// Keeps the candidates of `layer` whose row at `anchor` lies within the
/// Hoeffding radius of the empirical row.
pub fn eliminate_prototypes(
    state: &LearnerState,
    family: &PrototypeFamily,
    layer: usize,
    anchor: (usize, usize),
    config: &ExperimentConfig,
) -> Elimination {
    let current = &state.surviving[layer];
    let unchanged = Elimination {
        kept: current.clone(),
        coverage_loss: false,
    };
    if current.len() <= 1 {
        return unchanged;
    }
    let (s, a) = anchor;
    let Some(empirical) = state.empirical_row(s, a) else {
        return unchanged;
    };
    let layout = family.layout();
    let radius = hoeffding_radius(
        layout.layer_size(layer + 1),
        layout.num_layers(),
        config.episodes,
        config.delta,
        state.count(s, a),
    );
    let distances: Vec<(usize, f64)> = current.iter().map(|&k| (k, l1(family.row(k, s, a), &empirical))).collect();
    let kept: Vec<usize> = distances.iter().filter(|&&(_, d)| d <= radius).map(|&(k, _)| k).collect();
    if !kept.is_empty() {
        return Elimination {
            kept,
            coverage_loss: false,
        };
    }
    let nearest = distances
        .iter()
        .fold(distances[0], |best, &c| if c.1 < best.1 { c } else { best });
    Elimination {
        kept: vec![nearest.0],
        coverage_loss: true,
    }
}

/// Every layer is down to one candidate.
pub fn early_stop_check(state: &LearnerState) -> bool {
    state.surviving.iter().all(|set| set.len() == 1)
}

/// What a learner decided before running an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub policy: Policy,
    /// `min_{P ∈ U_t} R(π_t, P)` (RPO-AAS).
    pub robust_lower_bound: Option<f64>,
    /// The kernel the policy was computed against: the adversary's choice
    /// for RPO-AAS, the assembled prototype kernel for NRPO.
    pub planning_kernel: Option<TransitionKernel>,
    pub coverage_loss: bool,
}

/// Elimination and robust planning for the next episode.
pub fn rpo_aas_plan(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    config: &ExperimentConfig,
) -> Result<Plan> {
    if state.frozen {
        return Ok(state.frozen_plan.clone().expect("frozen learners keep their plan"));
    }
    let mut coverage_loss = false;
    let mut updated = Vec::with_capacity(family.num_layers());
    for l in 0..family.num_layers() {
        let anchor = select_anchor(state, family, l, &state.surviving[l], config.anchor);
        let outcome = eliminate_prototypes(state, family, l, anchor, config);
        if outcome.coverage_loss {
            coverage_loss = true;
            state.coverage_losses.push(CoverageLoss {
                episode: state.episode + 1,
                layer: l,
            });
        }
        assert!(
            outcome.kept.iter().all(|k| state.surviving[l].contains(k)),
            "candidate sets must shrink monotonically"
        );
        updated.push(outcome.kept);
    }
    state.surviving = updated;
    let sets = CandidateSets::new(family, state.surviving.clone())?;
    let solution = robust_policy_dp(&sets, mdp);
    let plan = Plan {
        policy: solution.policy.clone(),
        robust_lower_bound: Some(solution.value()),
        planning_kernel: Some(solution.worst_case_kernel(family)),
        coverage_loss,
    };
    state.policy = plan.policy.clone();
    if config.early_stop && early_stop_check(state) {
        state.frozen = true;
        state.frozen_plan = Some(Plan {
            coverage_loss: false,
            ..plan.clone()
        });
    }
    Ok(plan)
}

fn nearest_at_anchor(state: &LearnerState, family: &PrototypeFamily, layer: usize, rule: AnchorRule) -> usize {
    let all: Vec<usize> = (0..family.len(layer)).collect();
    let (s, a) = select_anchor(state, family, layer, &all, rule);
    let Some(empirical) = state.empirical_row(s, a) else {
        return 0;
    };
    argmin((0..family.len(layer)).map(|k| l1(family.row(k, s, a), &empirical)))
}

fn nearest_in_sum(state: &LearnerState, family: &PrototypeFamily, layer: usize) -> usize {
    let rows: Vec<(usize, usize, Vec<f64>)> = state
        .pairs(layer)
        .filter_map(|(s, a)| state.empirical_row(s, a).map(|r| (s, a, r)))
        .collect();
    argmin((0..family.len(layer)).map(|k| rows.iter().map(|(s, a, r)| l1(family.row(k, *s, *a), r)).sum()))
}

/// Index of the first minimum.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn nominal_plan(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    choice: Vec<usize>,
) -> Result<Plan> {
    let kernel = family.assemble(&choice)?;
    let (policy, _) = optimal_policy_dp(&kernel, mdp);
    state.surviving = choice.into_iter().map(|k| vec![k]).collect();
    state.policy = policy.clone();
    Ok(Plan {
        policy,
        robust_lower_bound: None,
        planning_kernel: Some(kernel),
        coverage_loss: false,
    })
}

/// Nearest prototype at each layer's anchor, then plan for that kernel.
pub fn nrpo_npc_plan(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    config: &ExperimentConfig,
) -> Result<Plan> {
    let choice = (0..family.num_layers())
        .map(|l| nearest_at_anchor(state, family, l, config.anchor))
        .collect();
    nominal_plan(state, mdp, family, choice)
}

/// Prototype minimizing the layer-wide sum of distances to the visited
/// empirical rows, then plan for that kernel.
pub fn nrpo_npc2_plan(state: &mut LearnerState, mdp: &LayeredMdp, family: &PrototypeFamily) -> Result<Plan> {
    let choice = (0..family.num_layers()).map(|l| nearest_in_sum(state, family, l)).collect();
    nominal_plan(state, mdp, family, choice)
}

/// Optimistic values for UCBVI on the empirical kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticSolution {
    pub policy: Policy,
    pub values: Vec<f64>,
}

/// Backward induction on the empirical kernel with bonus
/// `scale · (L − l) · √(ln(3|S||A|T/δ) / max(N, 1))`, clipped to
/// `[0, r_max · L]`. Unvisited rows are uniform over the next layer.
pub fn ucbvi_solve(state: &LearnerState, mdp: &LayeredMdp, config: &ExperimentConfig) -> OptimisticSolution {
    let layout = mdp.layout();
    let num_layers = layout.num_layers() as f64;
    let log = (3.0 * layout.num_states() as f64 * mdp.num_actions() as f64 * config.episodes as f64 / config.delta).ln();
    let ceiling = mdp.max_reward() * num_layers;
    let mut values = vec![0.0; layout.num_states()];
    let mut actions = vec![0; layout.num_decision_states()];
    for l in (0..layout.horizon()).rev() {
        let next = layout.layer_states(l + 1);
        let uniform = 1.0 / next.len() as f64;
        let future = num_layers - l as f64;
        for s in layout.layer_states(l) {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions() {
                let n = state.count(s, a);
                let cont: f64 = if n == 0 {
                    next.clone().map(|t| uniform * values[t]).sum()
                } else {
                    next.clone()
                        .map(|t| state.transition_count(s, a, t) as f64 / n as f64 * values[t])
                        .sum()
                };
                let bonus = config.ucbvi_bonus_scale * future * (log / n.max(1) as f64).sqrt();
                let q = (mdp.reward(s, a) + bonus + cont).clamp(0.0, ceiling);
                if q > best {
                    best = q;
                    actions[s] = a;
                }
            }
            values[s] = best;
        }
    }
    OptimisticSolution {
        policy: Policy::new(actions),
        values,
    }
}

pub fn ucbvi_plan(state: &mut LearnerState, mdp: &LayeredMdp, config: &ExperimentConfig) -> Plan {
    let solution = ucbvi_solve(state, mdp, config);
    state.policy = solution.policy.clone();
    Plan {
        policy: solution.policy,
        robust_lower_bound: None,
        planning_kernel: None,
        coverage_loss: false,
    }
}

/// Runs one episode of `policy` under the true kernel and records it.
pub fn execute_episode<R: Rng + ?Sized>(state: &mut LearnerState, mdp: &LayeredMdp, policy: &Policy, rng: &mut R) -> Vec<Step> {
    let trajectory = sample_trajectory(mdp.true_kernel(), policy, mdp, rng);
    state.record(&trajectory);
    trajectory
}

pub fn rpo_aas_step<R: Rng + ?Sized>(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<(Plan, Vec<Step>)> {
    let plan = rpo_aas_plan(state, mdp, family, config)?;
    let path = execute_episode(state, mdp, &plan.policy, rng);
    Ok((plan, path))
}

pub fn nrpo_npc_step<R: Rng + ?Sized>(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<(Plan, Vec<Step>)> {
    let plan = nrpo_npc_plan(state, mdp, family, config)?;
    let path = execute_episode(state, mdp, &plan.policy, rng);
    Ok((plan, path))
}

pub fn nrpo_npc2_step<R: Rng + ?Sized>(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    rng: &mut R,
) -> Result<(Plan, Vec<Step>)> {
    let plan = nrpo_npc2_plan(state, mdp, family)?;
    let path = execute_episode(state, mdp, &plan.policy, rng);
    Ok((plan, path))
}

pub fn ucbvi_step<R: Rng + ?Sized>(
    state: &mut LearnerState,
    mdp: &LayeredMdp,
    config: &ExperimentConfig,
    rng: &mut R,
) -> (Plan, Vec<Step>) {
    let plan = ucbvi_plan(state, mdp, config);
    let path = execute_episode(state, mdp, &plan.policy, rng);
    (plan, path)
}

/// Metrics of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// Exact `R(π_t, P_0)`.
    pub expected_reward: f64,
    /// `⟨q* − q_t, r⟩`.
    pub regret: f64,
    pub robust_lower_bound: Option<f64>,
    /// The true kernel lies in the ambiguity set used for planning; `None`
    /// when the family has no known truth or the learner keeps no set.
    pub covered: Option<bool>,
    pub candidates: Vec<usize>,
    /// Largest `‖P^k(s, a) − P_0(s, a)‖₁` over surviving `k` and the pairs
    /// of each layer.
    pub survivor_gap: Vec<f64>,
    pub frozen: bool,
    /// Largest `‖P_t(s, a) − P_0(s, a)‖₁` of the planning kernel.
    pub xi_max: Option<f64>,
    /// `R(π*, P_t) − R(π_t, P_t)` for the nominal planners.
    pub middle_term: Option<f64>,
    pub coverage_loss: bool,
}

/// A learner bound to one instance.
pub struct Learner<'a> {
    algorithm: Algorithm,
    mdp: &'a LayeredMdp,
    family: &'a PrototypeFamily,
    config: ExperimentConfig,
    state: LearnerState,
    optimal_policy: Policy,
    optimal_reward: f64,
    reward_cache: Option<(Policy, f64)>,
}

/// Exact expected episode reward of `policy` under the true kernel.
pub fn policy_reward(policy: &Policy, mdp: &LayeredMdp) -> Result<f64> {
    let q = occupancy_from(mdp.true_kernel(), policy, mdp)?;
    Ok(expected_reward(&q, mdp.rewards()))
}

impl<'a> Learner<'a> {
    pub fn new(
        algorithm: Algorithm,
        mdp: &'a LayeredMdp,
        family: &'a PrototypeFamily,
        config: &ExperimentConfig,
    ) -> Result<Self> {
        config.validate()?;
        if family.layout() != mdp.layout() || family.num_actions() != mdp.num_actions() {
            return Err(Error::Shape("family does not match the MDP".into()));
        }
        let (optimal_policy, _) = optimal_policy_dp(mdp.true_kernel(), mdp);
        let optimal_reward = policy_reward(&optimal_policy, mdp)?;
        Ok(Self {
            algorithm,
            mdp,
            family,
            config: config.clone(),
            state: LearnerState::new(family),
            optimal_policy,
            optimal_reward,
            reward_cache: None,
        })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn optimal_reward(&self) -> f64 {
        self.optimal_reward
    }

    fn reward_of(&mut self, policy: &Policy) -> Result<f64> {
        if let Some((p, r)) = &self.reward_cache {
            if p == policy {
                return Ok(*r);
            }
        }
        let r = policy_reward(policy, self.mdp)?;
        self.reward_cache = Some((policy.clone(), r));
        Ok(r)
    }

    /// Whether every surviving layer keeps a candidate that reproduces the
    /// true rows of that layer.
    fn covered(&self) -> Option<bool> {
        let truth = self.mdp.true_kernel();
        let layout = self.mdp.layout();
        let ok = (0..self.family.num_layers()).all(|l| {
            layout.layer_states(l).all(|s| {
                (0..self.mdp.num_actions())
                    .all(|a| self.state.surviving[l].iter().any(|&k| self.family.row(k, s, a) == truth.row(s, a)))
            })
        });
        Some(ok)
    }

    fn survivor_gap(&self) -> Vec<f64> {
        let layout = self.mdp.layout();
        (0..self.family.num_layers())
            .map(|l| {
                let mut gap: f64 = 0.0;
                for &k in &self.state.surviving[l] {
                    for s in layout.layer_states(l) {
                        for a in 0..self.mdp.num_actions() {
                            gap = gap.max(self.family.distance_to_truth(self.mdp, k, s, a));
                        }
                    }
                }
                gap
            })
            .collect()
    }

    /// Plans, runs and records the next episode.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EpisodeRecord> {
        let plan = match self.algorithm {
            Algorithm::RpoAas => rpo_aas_plan(&mut self.state, self.mdp, self.family, &self.config)?,
            Algorithm::NrpoNpc => nrpo_npc_plan(&mut self.state, self.mdp, self.family, &self.config)?,
            Algorithm::NrpoNpc2 => nrpo_npc2_plan(&mut self.state, self.mdp, self.family)?,
            Algorithm::Ucbvi => ucbvi_plan(&mut self.state, self.mdp, &self.config),
            Algorithm::Oracle => {
                self.state.policy = self.optimal_policy.clone();
                Plan {
                    policy: self.optimal_policy.clone(),
                    robust_lower_bound: None,
                    planning_kernel: Some(self.mdp.true_kernel().clone()),
                    coverage_loss: false,
                }
            }
        };
        let reward = self.reward_of(&plan.policy)?;
        let tracks_sets = matches!(self.algorithm, Algorithm::RpoAas);
        let covered = if tracks_sets && self.family.true_indices().is_some() {
            self.covered()
        } else {
            None
        };
        let xi_max = plan.planning_kernel.as_ref().map(|k| {
            let truth = self.mdp.true_kernel();
            (0..self.mdp.layout().num_decision_states())
                .flat_map(|s| (0..self.mdp.num_actions()).map(move |a| (s, a)))
                .map(|(s, a)| l1(k.row(s, a), truth.row(s, a)))
                .fold(0.0, f64::max)
        });
        let middle_term = match (self.algorithm, &plan.planning_kernel) {
            (Algorithm::NrpoNpc | Algorithm::NrpoNpc2, Some(kernel)) => {
                let star = value_function(&self.optimal_policy, kernel, self.mdp)?[0];
                let own = value_function(&plan.policy, kernel, self.mdp)?[0];
                Some(star - own)
            }
            _ => None,
        };
        let record = EpisodeRecord {
            episode: self.state.episode + 1,
            expected_reward: reward,
            regret: self.optimal_reward - reward,
            robust_lower_bound: plan.robust_lower_bound,
            covered,
            candidates: self.state.surviving.iter().map(Vec::len).collect(),
            survivor_gap: if tracks_sets { self.survivor_gap() } else { Vec::new() },
            frozen: self.state.frozen,
            xi_max,
            middle_term,
            coverage_loss: plan.coverage_loss,
        };
        execute_episode(&mut self.state, self.mdp, &plan.policy, rng);
        Ok(record)
    }
}

/// Random stream for a learner: seeded by `config.seed`, one stream per
/// algorithm so paired runs do not share draws.
pub fn learner_rng(algorithm: Algorithm, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + algorithm.id());
    rng
}

/// Runs `config.episodes` episodes and returns one record per episode.
pub fn run_learner(
    algorithm: Algorithm,
    mdp: &LayeredMdp,
    family: &PrototypeFamily,
    config: &ExperimentConfig,
) -> Result<Vec<EpisodeRecord>> {
    if config.episodes == 0 {
        return Ok(Vec::new());
    }
    let mut learner = Learner::new(algorithm, mdp, family, config)?;
    let mut rng = learner_rng(algorithm, config.seed);
    (0..config.episodes).map(|_| learner.step(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{generate_fixed_gap_prototypes, GridWorldSpec, Sharing};
    use crate::family::{FamilyLayer, Fragment};

    #[test]
    fn radius_closed_form() {
        let r = hoeffding_radius(2, 8, 1000, 0.05, 100);
        let expected = (8.0 * (24000.0f64 / 0.05).ln() / 100.0).sqrt();
        assert!((r - expected).abs() < 1e-15);
        assert!((r - 1.0230).abs() < 5e-5);
        assert!(hoeffding_radius(2, 8, 1000, 0.05, 0).is_infinite());
    }

    fn chain_family() -> (LayeredMdp, PrototypeFamily) {
        // s0 -> {x, y} -> end with a two-point row at s0
        let layout = LayerLayout::new(&[1, 2, 1]).unwrap();
        let make = |p: f64| {
            TransitionKernel::from_successor_fn(&layout, 2, |s, _, t| match (s, t) {
                (0, 1) => p,
                (0, 2) => 1.0 - p,
                _ => 1.0,
            })
            .unwrap()
        };
        let kernels = [make(0.95), make(0.4)];
        let mdp = LayeredMdp::new(layout.clone(), 2, vec![vec![0.0; 2], vec![1.0; 2], vec![0.0; 2]], kernels[0].clone())
            .unwrap();
        let layers = (0..2)
            .map(|l| {
                let frags = kernels.iter().map(|k| Fragment::from_kernel(k, &layout, l)).collect();
                FamilyLayer::new(frags, vec![0, 1], Some(0))
            })
            .collect();
        let family = PrototypeFamily::new(layout, 2, layers).unwrap().merge_identical();
        (mdp, family)
    }

    #[test]
    fn anchor_tie_breaks_lexicographically() {
        let layout = LayerLayout::new(&[1, 2, 1]).unwrap();
        let kernel = TransitionKernel::from_successor_fn(&layout, 2, |s, _, _| if s == 0 { 0.5 } else { 1.0 }).unwrap();
        let layers = (0..2)
            .map(|l| FamilyLayer::new(vec![Fragment::from_kernel(&kernel, &layout, l)], vec![0], Some(0)))
            .collect();
        let family = PrototypeFamily::new(layout, 2, layers).unwrap();
        let mut state = LearnerState::new(&family);
        assert_eq!(select_anchor_pair(&state, 1), (1, 0));
        state.counts[1][0] = 5;
        state.counts[1][1] = 9;
        state.counts[2][0] = 9;
        assert_eq!(select_anchor_pair(&state, 1), (1, 1));
    }

    #[test]
    fn elimination_threshold() {
        let (_, family) = chain_family();
        let mut state = LearnerState::new(&family);
        let config = ExperimentConfig {
            episodes: 10,
            delta: 0.1,
            ..Default::default()
        };
        // no data: nothing happens
        let e = eliminate_prototypes(&state, &family, 0, (0, 0), &config);
        assert_eq!(e.kept, vec![0, 1]);
        // 20 visits, all to x: distances 0.1 and 1.2, radius sqrt(8 ln 3000 / 20) ~ 1.79
        state.counts[0][0] = 20;
        state.transition_counts[0][0][1] = 20;
        let e = eliminate_prototypes(&state, &family, 0, (0, 0), &config);
        assert_eq!(e.kept, vec![0, 1]);
        state.counts[0][0] = 200;
        state.transition_counts[0][0][1] = 200;
        // radius ~ 0.56
        let e = eliminate_prototypes(&state, &family, 0, (0, 0), &config);
        assert_eq!(e.kept, vec![0]);
        assert!(!e.coverage_loss);
        // singleton layer is untouched
        assert_eq!(eliminate_prototypes(&state, &family, 1, (1, 0), &config).kept, vec![0]);
    }

    #[test]
    fn empty_result_keeps_nearest() {
        let (_, family) = chain_family();
        let mut state = LearnerState::new(&family);
        state.counts[0][1] = 100_000;
        state.transition_counts[0][1][2] = 100_000;
        let config = ExperimentConfig {
            episodes: 10,
            ..Default::default()
        };
        let e = eliminate_prototypes(&state, &family, 0, (0, 1), &config);
        assert_eq!(e.kept, vec![1]);
        assert!(e.coverage_loss);
    }

    #[test]
    fn single_prototype_matches_fixed_optimal_policy() {
        let world = GridWorldSpec::single([0.8, 0.3]).instantiate().unwrap();
        let config = ExperimentConfig {
            episodes: 50,
            ..Default::default()
        };
        let (optimal, _) = optimal_policy_dp(world.mdp.true_kernel(), &world.mdp);
        let mut state = LearnerState::new(&world.family);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (plan, _) = rpo_aas_step(&mut state, &world.mdp, &world.family, &config, &mut rng).unwrap();
            assert_eq!(plan.policy, optimal);
        }
        let records = run_learner(Algorithm::RpoAas, &world.mdp, &world.family, &config).unwrap();
        assert!(records.iter().all(|r| r.regret.abs() < 1e-12));
    }

    #[test]
    fn counts_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut rng).unwrap();
        let config = ExperimentConfig {
            episodes: 300,
            ..Default::default()
        };
        let mut learner = Learner::new(Algorithm::RpoAas, &world.mdp, &world.family, &config).unwrap();
        let mut previous = learner.state().surviving.clone();
        for t in 1..=300 {
            learner.step(&mut rng).unwrap();
            let state = learner.state();
            for l in 0..7 {
                assert_eq!(state.layer_visits(l), t as u64);
                assert!(state.surviving[l].iter().all(|k| previous[l].contains(k)));
                assert!(!state.surviving[l].is_empty());
            }
            for s in 0..19 {
                for a in 0..2 {
                    let total: u64 = (0..20).map(|n| state.transition_count(s, a, n)).sum();
                    assert_eq!(total, state.count(s, a));
                }
            }
            previous = state.surviving.clone();
        }
    }

    #[test]
    fn ucbvi_starts_at_ceiling() {
        let world = GridWorldSpec::single([0.8, 0.3]).instantiate().unwrap();
        let state = LearnerState::new(&world.family);
        let sol = ucbvi_solve(&state, &world.mdp, &ExperimentConfig::default());
        assert_eq!(sol.values[0], 5.0 * 8.0);
        assert!(sol.values.iter().all(|&v| (0.0..=40.0).contains(&v)));
    }

    #[test]
    fn oracle_has_no_regret() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut rng).unwrap();
        let config = ExperimentConfig {
            episodes: 20,
            ..Default::default()
        };
        let records = run_learner(Algorithm::Oracle, &world.mdp, &world.family, &config).unwrap();
        assert_eq!(records.len(), 20);
        assert!(records.iter().all(|r| r.regret == 0.0));
        let none = run_learner(Algorithm::Oracle, &world.mdp, &world.family, &ExperimentConfig { episodes: 0, ..config })
            .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn runs_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut rng).unwrap();
        let config = ExperimentConfig {
            episodes: 200,
            seed: 77,
            ..Default::default()
        };
        for alg in Algorithm::ALL {
            let a = run_learner(alg, &world.mdp, &world.family, &config).unwrap();
            let b = run_learner(alg, &world.mdp, &world.family, &config).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn algorithm_tags_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.as_str().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("ppo".parse::<Algorithm>().is_err());
    }
}
