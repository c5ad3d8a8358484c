//! Occupancy measures `q(s, a, s')` of loop-free MDPs and the kernel/policy
//! pair they induce.

use crate::error::Result;
use crate::mdp::{ActionRule, LayerLayout, LayeredMdp, StochasticPolicy, TransitionKernel};

/// Probability of traversing each `(s, a, s')` triple in one episode.
///
/// Entries are stored per decision state and action over the successor layer,
/// indexed by position within that layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    layout: LayerLayout,
    num_actions: usize,
    q: Vec<Vec<Vec<f64>>>,
}

impl OccupancyMeasure {
    /// Wraps raw values `[state][action][position in next layer]`.
    pub fn from_values(layout: LayerLayout, num_actions: usize, q: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        use crate::error::Error;
        if q.len() != layout.num_decision_states() {
            return Err(Error::Shape("occupancy has wrong number of states".into()));
        }
        for (s, per_action) in q.iter().enumerate() {
            let width = layout.layer_size(layout.layer_of(s) + 1);
            if per_action.len() != num_actions || per_action.iter().any(|v| v.len() != width) {
                return Err(Error::Shape(format!("occupancy row {s} has wrong shape")));
            }
        }
        Ok(Self { layout, num_actions, q })
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `q(s, a, s')` with `next` a global state id.
    pub fn get(&self, state: usize, action: usize, next: usize) -> f64 {
        let l = self.layout.layer_of(state);
        if self.layout.layer_of(next) != l + 1 {
            return 0.0;
        }
        self.q[state][action][self.layout.position(next)]
    }

    /// Successor-layer slice of `q(s, a, ·)`.
    pub fn successors(&self, state: usize, action: usize) -> &[f64] {
        &self.q[state][action]
    }

    /// `q(s, a) = Σ_{s'} q(s, a, s')`.
    pub fn state_action(&self, state: usize, action: usize) -> f64 {
        self.q[state][action].iter().sum()
    }

    /// Total mass on transitions leaving `layer`.
    pub fn layer_mass(&self, layer: usize) -> f64 {
        self.layout
            .layer_states(layer)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.state_action(s, a))
            .sum()
    }

    pub fn outflow(&self, state: usize) -> f64 {
        (0..self.num_actions).map(|a| self.state_action(state, a)).sum()
    }

    pub fn inflow(&self, state: usize) -> f64 {
        let l = self.layout.layer_of(state);
        if l == 0 {
            return 0.0;
        }
        let pos = self.layout.position(state);
        self.layout
            .layer_states(l - 1)
            .map(|s| (0..self.num_actions).map(|a| self.q[s][a][pos]).sum::<f64>())
            .sum()
    }

    /// Largest violation of the per-layer mass and flow-conservation
    /// properties. Both hold within `tol` for any occupancy measure of a
    /// valid kernel and policy.
    pub fn property_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 0..self.layout.horizon() {
            worst = worst.max((self.layer_mass(l) - 1.0).abs());
        }
        for l in 1..self.layout.horizon() {
            for s in self.layout.layer_states(l) {
                worst = worst.max((self.inflow(s) - self.outflow(s)).abs());
            }
        }
        worst
    }

    /// Sum of absolute entry differences.
    pub fn l1_distance(&self, other: &OccupancyMeasure) -> f64 {
        self.q
            .iter()
            .flatten()
            .flatten()
            .zip(other.q.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Exact occupancy measure of `policy` under `kernel`, computed by forward
/// recursion over the layers.
pub fn occupancy_from(
    kernel: &TransitionKernel,
    policy: &impl ActionRule,
    mdp: &LayeredMdp,
) -> Result<OccupancyMeasure> {
    mdp.check_compatible(kernel, policy)?;
    let layout = mdp.layout();
    let num_actions = mdp.num_actions();
    let mut reach = vec![0.0; layout.num_states()];
    reach[layout.initial_state()] = 1.0;
    let mut q = Vec::with_capacity(layout.num_decision_states());
    for l in 0..layout.horizon() {
        let next = layout.layer_states(l + 1);
        for s in layout.layer_states(l) {
            let mut per_action = Vec::with_capacity(num_actions);
            for a in 0..num_actions {
                let mass = reach[s] * policy.prob(s, a);
                let row = kernel.row(s, a);
                let entries: Vec<f64> = next.clone().map(|t| mass * row[t]).collect();
                per_action.push(entries);
            }
            for entries in &per_action {
                for (t, &m) in next.clone().zip(entries) {
                    reach[t] += m;
                }
            }
            q.push(per_action);
        }
    }
    Ok(OccupancyMeasure {
        layout: layout.clone(),
        num_actions,
        q,
    })
}

/// `⟨q, r⟩ = Σ q(s, a, s') r(s, a)`.
pub fn expected_reward(q: &OccupancyMeasure, reward: &[Vec<f64>]) -> f64 {
    assert_eq!(q.q.len(), reward.len(), "reward table does not match occupancy");
    let mut total = 0.0;
    for (s, per_action) in q.q.iter().enumerate() {
        for (a, entries) in per_action.iter().enumerate() {
            let mass: f64 = entries.iter().sum();
            total += mass * reward[s][a];
        }
    }
    total
}

/// Kernel induced by an occupancy measure. Rows whose `(s, a)` has zero
/// occupancy are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedKernel {
    layout: LayerLayout,
    rows: Vec<Vec<Option<Vec<f64>>>>,
}

impl InducedKernel {
    pub fn row(&self, state: usize, action: usize) -> Option<&[f64]> {
        self.rows[state][action].as_deref()
    }

    pub fn is_defined(&self, state: usize, action: usize) -> bool {
        self.rows[state][action].is_some()
    }

    /// Fills undefined rows from `fallback`, giving a complete kernel.
    pub fn complete_with(&self, fallback: &TransitionKernel) -> Result<TransitionKernel> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(s, per_action)| {
                per_action
                    .iter()
                    .enumerate()
                    .map(|(a, row)| match row {
                        Some(r) => r.clone(),
                        None => fallback.row(s, a).to_vec(),
                    })
                    .collect()
            })
            .collect();
        TransitionKernel::new(&self.layout, fallback.num_actions(), rows)
    }
}

/// Policy induced by an occupancy measure. Rows of unvisited states are
/// undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedPolicy {
    rows: Vec<Option<Vec<f64>>>,
}

impl InducedPolicy {
    pub fn row(&self, state: usize) -> Option<&[f64]> {
        self.rows[state].as_deref()
    }

    /// Fills undefined rows with the uniform distribution.
    pub fn complete(&self, num_actions: usize) -> StochasticPolicy {
        let uniform = vec![1.0 / num_actions as f64; num_actions];
        StochasticPolicy::new(
            self.rows
                .iter()
                .map(|r| r.clone().unwrap_or_else(|| uniform.clone()))
                .collect(),
        )
    }
}

/// `P^q(s'|s,a) = q(s,a,s') / Σ_y q(s,a,y)`.
pub fn induce_kernel(q: &OccupancyMeasure) -> InducedKernel {
    let layout = &q.layout;
    let n = layout.num_states();
    let rows = q
        .q
        .iter()
        .enumerate()
        .map(|(s, per_action)| {
            let next = layout.layer_states(layout.layer_of(s) + 1);
            per_action
                .iter()
                .map(|entries| {
                    let total: f64 = entries.iter().sum();
                    (total > 0.0).then(|| {
                        let mut row = vec![0.0; n];
                        for (t, &m) in next.clone().zip(entries) {
                            row[t] = m / total;
                        }
                        row
                    })
                })
                .collect()
        })
        .collect();
    InducedKernel {
        layout: layout.clone(),
        rows,
    }
}

/// `π^q(a|s) = q(s, a) / Σ_b q(s, b)`.
pub fn induce_policy(q: &OccupancyMeasure) -> InducedPolicy {
    let rows = (0..q.q.len())
        .map(|s| {
            let per_action: Vec<f64> = (0..q.num_actions).map(|a| q.state_action(s, a)).collect();
            let total: f64 = per_action.iter().sum();
            (total > 0.0).then(|| per_action.iter().map(|m| m / total).collect())
        })
        .collect();
    InducedPolicy { rows }
}
