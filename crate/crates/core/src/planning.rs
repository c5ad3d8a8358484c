//! Backward induction: optimal planning under a single kernel and robust
//! planning over `(s, a)`-rectangular prototype ambiguity sets.
//!
//! One robust sweep touches every decision pair once per candidate prototype
//! and successor state, i.e. `Σ_l |S_l| |A| |K_l| |S_{l+1}|` row entries.
//! [`RobustSolution::backup_ops`] reports that count for each call.

use crate::error::{Error, Result};
use crate::family::PrototypeFamily;
use crate::mdp::{value_function, LayeredMdp, Policy, TransitionKernel};

/// Surviving prototype indices per decision layer, tied to their family.
#[derive(Debug, Clone)]
pub struct CandidateSets<'a> {
    family: &'a PrototypeFamily,
    members: Vec<Vec<usize>>,
}

impl<'a> CandidateSets<'a> {
    /// Members are sorted and deduplicated; empty layers are rejected.
    pub fn new(family: &'a PrototypeFamily, mut members: Vec<Vec<usize>>) -> Result<Self> {
        if members.len() != family.num_layers() {
            return Err(Error::Shape(format!(
                "{} candidate layers for a family with {}",
                members.len(),
                family.num_layers()
            )));
        }
        for (l, set) in members.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::EmptyCandidateSet { layer: l });
            }
            if let Some(&k) = set.iter().find(|&&k| k >= family.len(l)) {
                return Err(Error::UnknownPrototype {
                    layer: l,
                    index: k,
                    len: family.len(l),
                });
            }
        }
        Ok(Self { family, members })
    }

    /// Every prototype of the family.
    pub fn full(family: &'a PrototypeFamily) -> Self {
        let members = (0..family.num_layers()).map(|l| (0..family.len(l)).collect()).collect();
        Self { family, members }
    }

    pub fn family(&self) -> &'a PrototypeFamily {
        self.family
    }

    pub fn layer(&self, layer: usize) -> &[usize] {
        &self.members[layer]
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }
}

/// Robust policy with its worst-case values.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    pub policy: Policy,
    /// Worst-case value per state; terminal states are 0.
    pub worst_case_values: Vec<f64>,
    /// Robust `Q(s, a)` per decision state.
    pub q_values: Vec<Vec<f64>>,
    /// Prototype attaining the inner minimum at each `(s, a)`.
    pub minimizers: Vec<Vec<usize>>,
    pub backup_ops: usize,
}

impl RobustSolution {
    /// `max_π min_{P ∈ U} R(π, P)`.
    pub fn value(&self) -> f64 {
        self.worst_case_values[0]
    }

    /// The adversary's kernel against the returned policy.
    pub fn worst_case_kernel(&self, family: &PrototypeFamily) -> TransitionKernel {
        let layout = family.layout();
        let num_actions = family.num_actions();
        let rows = (0..layout.num_decision_states())
            .map(|s| {
                (0..num_actions)
                    .map(|a| family.row(self.minimizers[s][a], s, a).to_vec())
                    .collect()
            })
            .collect();
        TransitionKernel::new(layout, num_actions, rows).expect("family rows match layout")
    }
}

fn expected_next(row: &[f64], values: &[f64], next: std::ops::Range<usize>) -> f64 {
    next.map(|t| row[t] * values[t]).sum()
}

/// Standard backward induction. Ties in the argmax go to the smallest action.
pub fn optimal_policy_dp(kernel: &TransitionKernel, mdp: &LayeredMdp) -> (Policy, Vec<f64>) {
    let layout = mdp.layout();
    let mut values = vec![0.0; layout.num_states()];
    let mut actions = vec![0; layout.num_decision_states()];
    for l in (0..layout.horizon()).rev() {
        let next = layout.layer_states(l + 1);
        for s in layout.layer_states(l) {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions() {
                let q = mdp.reward(s, a) + expected_next(kernel.row(s, a), &values, next.clone());
                if q > best {
                    best = q;
                    actions[s] = a;
                }
            }
            values[s] = best;
        }
    }
    (Policy::new(actions), values)
}

/// Robust backward induction over the candidate sets.
///
/// At each `(s, a)` the backup is minimized over the candidates of `s`'s
/// layer independently, which is exact for a Cartesian-product ambiguity set.
/// The inner minimum keeps the smallest prototype index on ties; the outer
/// maximum keeps the smallest action.
pub fn robust_policy_dp(sets: &CandidateSets<'_>, mdp: &LayeredMdp) -> RobustSolution {
    let family = sets.family();
    let layout = mdp.layout();
    let num_actions = mdp.num_actions();
    let mut values = vec![0.0; layout.num_states()];
    let mut actions = vec![0; layout.num_decision_states()];
    let mut q_values = vec![vec![0.0; num_actions]; layout.num_decision_states()];
    let mut minimizers = vec![vec![0; num_actions]; layout.num_decision_states()];
    let mut ops = 0;
    for l in (0..layout.horizon()).rev() {
        let next = layout.layer_states(l + 1);
        let candidates = sets.layer(l);
        for s in layout.layer_states(l) {
            let mut best = f64::NEG_INFINITY;
            for a in 0..num_actions {
                let mut worst = f64::INFINITY;
                let mut arg = candidates[0];
                for &k in candidates {
                    let q = mdp.reward(s, a) + expected_next(family.row(k, s, a), &values, next.clone());
                    ops += next.len();
                    if q < worst {
                        worst = q;
                        arg = k;
                    }
                }
                q_values[s][a] = worst;
                minimizers[s][a] = arg;
                if worst > best {
                    best = worst;
                    actions[s] = a;
                }
            }
            values[s] = best;
        }
    }
    RobustSolution {
        policy: Policy::new(actions),
        worst_case_values: values,
        q_values,
        minimizers,
        backup_ops: ops,
    }
}

/// Exhaustive-search limit for [`brute_force_robust_oracle`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Max-min by enumeration: every deterministic policy against every
/// per-`(s, a)` prototype assignment, each evaluated exactly.
///
/// Among policies whose worst-case value is within `1e-12` of the best, the
/// one with the lexicographically smallest action vector wins. This agrees
/// with the per-state tie-breaking of [`robust_policy_dp`] whenever ties only
/// arise between policies that differ in value.
pub fn brute_force_robust_oracle(sets: &CandidateSets<'_>, mdp: &LayeredMdp) -> Result<(Policy, f64)> {
    let family = sets.family();
    let layout = mdp.layout();
    let num_actions = mdp.num_actions();
    let decision = layout.num_decision_states();
    let pairs: Vec<(usize, usize)> = (0..decision)
        .flat_map(|s| (0..num_actions).map(move |a| (s, a)))
        .collect();
    let policies = (num_actions as f64).powi(decision as i32);
    let assignments: f64 = pairs
        .iter()
        .map(|&(s, _)| sets.layer(layout.layer_of(s)).len() as f64)
        .product();
    let size = policies * assignments;
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut best: Option<(Policy, f64)> = None;
    let mut actions = vec![0usize; decision];
    loop {
        let policy = Policy::new(actions.clone());
        let mut worst = f64::INFINITY;
        let mut choice = vec![0usize; pairs.len()];
        loop {
            let mut kernel = family.assemble(&vec![0; family.num_layers()])?;
            for (i, &(s, a)) in pairs.iter().enumerate() {
                let k = sets.layer(layout.layer_of(s))[choice[i]];
                kernel.set_row(s, a, family.row(k, s, a));
            }
            let v = value_function(&policy, &kernel, mdp)?[0];
            worst = worst.min(v);
            if !advance(&mut choice, |i| sets.layer(layout.layer_of(pairs[i].0)).len()) {
                break;
            }
        }
        match &best {
            Some((_, v)) if worst <= *v + 1e-12 => {}
            _ => best = Some((policy, worst)),
        }
        if !advance(&mut actions, |_| num_actions) {
            break;
        }
    }
    Ok(best.expect("at least one policy"))
}

/// Odometer increment with the last digit fastest; false after wrap-around.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix(i) {
            return true;
        }
        digits[i] = 0;
    }
    false
}
