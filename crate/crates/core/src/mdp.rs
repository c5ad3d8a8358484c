//! Loop-free episodic MDPs.
//!
//! States are grouped into layers `S_0, ..., S_L`; a transition from a state in
//! layer `l` always lands in layer `l + 1`. States are identified by
//! `(layer, position)` and the global id is the position offset by the sizes
//! of the preceding layers, so every layer occupies a contiguous id range.
//!
//! Transition rows are stored densely over the global state table. This keeps
//! structural defects (mass leaking outside the successor layer) representable
//! so that [`LayeredMdp::validate`] can report them.

use std::fmt;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance for row sums of constructed kernels.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Tolerance for quantities derived from kernels (occupancies, values).
pub const DERIVED_TOLERANCE: f64 = 1e-9;

/// Partition of the global state table into consecutive layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    offsets: Vec<usize>,
    layer_of: Vec<usize>,
}

impl LayerLayout {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Layout(format!(
                "need at least two layers, got {}",
                sizes.len()
            )));
        }
        if let Some(l) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Layout(format!("layer {l} is empty")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut layer_of = Vec::new();
        offsets.push(0);
        for (l, &n) in sizes.iter().enumerate() {
            offsets.push(offsets[l] + n);
            layer_of.extend(std::iter::repeat_n(l, n));
        }
        Ok(Self { offsets, layer_of })
    }

    /// Number of layers, `L + 1` in the `S_0..S_L` indexing.
    pub fn num_layers(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of transitions in an episode (`L`).
    pub fn horizon(&self) -> usize {
        self.num_layers() - 1
    }

    pub fn num_states(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// States with outgoing transitions (every layer but the last).
    pub fn num_decision_states(&self) -> usize {
        self.offsets[self.horizon()]
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.offsets[layer + 1] - self.offsets[layer]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        (0..self.num_layers()).map(|l| self.layer_size(l)).collect()
    }

    pub fn layer_states(&self, layer: usize) -> Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    pub fn layer_of(&self, state: usize) -> usize {
        self.layer_of[state]
    }

    pub fn position(&self, state: usize) -> usize {
        state - self.offsets[self.layer_of[state]]
    }

    pub fn state(&self, layer: usize, position: usize) -> usize {
        debug_assert!(position < self.layer_size(layer));
        self.offsets[layer] + position
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    pub fn is_decision_state(&self, state: usize) -> bool {
        state < self.num_decision_states()
    }

    /// Largest successor layer, used to size scratch buffers.
    pub fn max_layer_size(&self) -> usize {
        (0..self.num_layers()).map(|l| self.layer_size(l)).max().unwrap()
    }
}

/// Transition probabilities for every decision state and action.
///
/// `row(s, a)` is a vector over the global state table; for a well-formed
/// loop-free kernel its support lies in the layer after `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<Vec<f64>>>,
}

impl TransitionKernel {
    /// Builds a kernel from dense rows indexed `[state][action][next_state]`,
    /// one entry per decision state of `layout`.
    pub fn new(layout: &LayerLayout, num_actions: usize, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = layout.num_states();
        if num_actions == 0 {
            return Err(Error::Shape("action set is empty".into()));
        }
        if rows.len() != layout.num_decision_states() {
            return Err(Error::Shape(format!(
                "kernel has {} state rows, layout has {} decision states",
                rows.len(),
                layout.num_decision_states()
            )));
        }
        for (s, per_action) in rows.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::Shape(format!(
                    "state {s} has {} action rows, expected {num_actions}",
                    per_action.len()
                )));
            }
            if let Some(a) = per_action.iter().position(|row| row.len() != n) {
                return Err(Error::Shape(format!(
                    "row ({s}, {a}) has length {}, expected {n}",
                    per_action[a].len()
                )));
            }
        }
        Ok(Self {
            num_states: n,
            num_actions,
            rows,
        })
    }

    /// Builds a kernel by evaluating `prob(s, a, s')` for every `s'` in the
    /// successor layer of `s`. Entries outside the successor layer are zero.
    pub fn from_successor_fn<F>(layout: &LayerLayout, num_actions: usize, mut prob: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let n = layout.num_states();
        let rows = (0..layout.num_decision_states())
            .map(|s| {
                let next = layout.layer_states(layout.layer_of(s) + 1);
                (0..num_actions)
                    .map(|a| {
                        let mut row = vec![0.0; n];
                        for t in next.clone() {
                            row[t] = prob(s, a, t);
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        Self::new(layout, num_actions, rows)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        &self.rows[state][action]
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.rows[state][action][next]
    }

    pub(crate) fn set_row(&mut self, state: usize, action: usize, row: &[f64]) {
        self.rows[state][action].copy_from_slice(row);
    }
}

/// Deterministic policy: one action per decision state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    /// Policy choosing action 0 everywhere.
    pub fn first_action(layout: &LayerLayout) -> Self {
        Self::new(vec![0; layout.num_decision_states()])
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Stochastic policy; only produced when inducing a policy from an occupancy
/// measure.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    probs: Vec<Vec<f64>>,
}

impl StochasticPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Self {
        Self { probs }
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }
}

/// Action distribution at a decision state.
pub trait ActionRule {
    fn num_states(&self) -> usize;
    fn prob(&self, state: usize, action: usize) -> f64;
}

impl ActionRule for Policy {
    fn num_states(&self) -> usize {
        self.actions.len()
    }

    fn prob(&self, state: usize, action: usize) -> f64 {
        if self.actions[state] == action {
            1.0
        } else {
            0.0
        }
    }
}

impl ActionRule for StochasticPolicy {
    fn num_states(&self) -> usize {
        self.probs.len()
    }

    fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state][action]
    }
}

/// A structural defect found by [`LayeredMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    FirstLayerNotSingleton { size: usize },
    LastLayerNotSingleton { size: usize },
    NegativeProbability { state: usize, action: usize, next: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    Leak { state: usize, action: usize, next: usize, from_layer: usize, to_layer: usize, mass: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FirstLayerNotSingleton { size } => {
                write!(f, "first layer has {size} states, expected 1")
            }
            Violation::LastLayerNotSingleton { size } => {
                write!(f, "last layer has {size} states, expected 1")
            }
            Violation::NegativeProbability { state, action, next, value } => {
                write!(f, "row ({state}, {action}) has negative entry {value} at state {next}")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row ({state}, {action}) sums to {sum}")
            }
            Violation::Leak { state, action, next, from_layer, to_layer, mass } => write!(
                f,
                "row ({state}, {action}) leaks mass {mass} from layer {from_layer} to state {next} in layer {to_layer}"
            ),
        }
    }
}

/// Outcome of structural validation; empty means well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A loop-free MDP with deterministic nonnegative rewards and a known true
/// transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMdp {
    layout: LayerLayout,
    num_actions: usize,
    reward: Vec<Vec<f64>>,
    kernel: TransitionKernel,
}

impl LayeredMdp {
    /// Checks shapes and reward signs only; structural invariants are
    /// reported by [`LayeredMdp::validate`].
    pub fn new(
        layout: LayerLayout,
        num_actions: usize,
        reward: Vec<Vec<f64>>,
        kernel: TransitionKernel,
    ) -> Result<Self> {
        if kernel.num_actions() != num_actions || kernel.num_states() != layout.num_states() {
            return Err(Error::Shape("kernel does not match layout".into()));
        }
        if reward.len() != layout.num_decision_states() {
            return Err(Error::Shape(format!(
                "reward table has {} rows, expected {}",
                reward.len(),
                layout.num_decision_states()
            )));
        }
        for (s, row) in reward.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::Shape(format!("reward row {s} has wrong length")));
            }
            for (a, &r) in row.iter().enumerate() {
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::Reward { state: s, action: a, value: r });
                }
            }
        }
        Ok(Self {
            layout,
            num_actions,
            reward,
            kernel,
        })
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.layout.num_states()
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state][action]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.reward
    }

    pub fn max_reward(&self) -> f64 {
        self.reward.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn true_kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    /// Reports every violated structural invariant: singleton end layers,
    /// stochastic rows and support restricted to the successor layer.
    pub fn validate(&self) -> ValidationReport {
        validate_kernel(&self.layout, &self.kernel)
    }

    /// Checks that `kernel` and `policy` fit this MDP.
    pub fn check_compatible(&self, kernel: &TransitionKernel, policy: &impl ActionRule) -> Result<()> {
        if kernel.num_states() != self.num_states() || kernel.num_actions() != self.num_actions {
            return Err(Error::Shape("kernel does not match the MDP".into()));
        }
        if policy.num_states() != self.layout.num_decision_states() {
            return Err(Error::Shape(format!(
                "policy covers {} states, MDP has {} decision states",
                policy.num_states(),
                self.layout.num_decision_states()
            )));
        }
        Ok(())
    }
}

/// Validates `kernel` against the loop-free structure of `layout`.
pub fn validate_kernel(layout: &LayerLayout, kernel: &TransitionKernel) -> ValidationReport {
    let mut violations = Vec::new();
    let first = layout.layer_size(0);
    if first != 1 {
        violations.push(Violation::FirstLayerNotSingleton { size: first });
    }
    let last = layout.layer_size(layout.horizon());
    if last != 1 {
        violations.push(Violation::LastLayerNotSingleton { size: last });
    }
    for s in 0..layout.num_decision_states() {
        let from = layout.layer_of(s);
        let next = layout.layer_states(from + 1);
        for a in 0..kernel.num_actions() {
            let row = kernel.row(s, a);
            let mut sum = 0.0;
            for (t, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    violations.push(Violation::NegativeProbability { state: s, action: a, next: t, value: p });
                }
                if p != 0.0 && !next.contains(&t) {
                    violations.push(Violation::Leak {
                        state: s,
                        action: a,
                        next: t,
                        from_layer: from,
                        to_layer: layout.layer_of(t),
                        mass: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                violations.push(Violation::RowSum { state: s, action: a, sum });
            }
        }
    }
    ValidationReport { violations }
}

/// Structural validation of a layered MDP.
pub fn validate_layered_mdp(mdp: &LayeredMdp) -> ValidationReport {
    mdp.validate()
}

/// Exact backward policy evaluation. Terminal states have value 0.
pub fn value_function(policy: &impl ActionRule, kernel: &TransitionKernel, mdp: &LayeredMdp) -> Result<Vec<f64>> {
    mdp.check_compatible(kernel, policy)?;
    let layout = mdp.layout();
    let mut values = vec![0.0; layout.num_states()];
    for l in (0..layout.horizon()).rev() {
        let next = layout.layer_states(l + 1);
        for s in layout.layer_states(l) {
            let mut v = 0.0;
            for a in 0..mdp.num_actions() {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                let row = kernel.row(s, a);
                let cont: f64 = next.clone().map(|t| row[t] * values[t]).sum();
                v += pa * (mdp.reward(s, a) + cont);
            }
            values[s] = v;
        }
    }
    Ok(values)
}

/// One step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

/// Samples one episode from the initial state to the last layer.
///
/// The output is a pure function of the inputs and the generator state.
pub fn sample_trajectory<R: Rng + ?Sized>(
    kernel: &TransitionKernel,
    policy: &Policy,
    mdp: &LayeredMdp,
    rng: &mut R,
) -> Vec<Step> {
    let layout = mdp.layout();
    let mut steps = Vec::with_capacity(layout.horizon());
    let mut state = layout.initial_state();
    for l in 0..layout.horizon() {
        let action = policy.action(state);
        let row = kernel.row(state, action);
        let next_layer = layout.layer_states(l + 1);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = None;
        let mut last_positive = next_layer.start;
        for t in next_layer {
            let p = row[t];
            if p > 0.0 {
                last_positive = t;
                acc += p;
                if u < acc {
                    next = Some(t);
                    break;
                }
            }
        }
        // Rounding can leave u just above the accumulated mass.
        let next = next.unwrap_or(last_positive);
        steps.push(Step { state, action, next });
        state = next;
    }
    steps
}

/// Sum of absolute coordinate differences.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(l1(p, q))
}

pub(crate) fn l1(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}
