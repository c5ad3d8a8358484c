//! Random layered instances shared by the integration tests.

#![allow(dead_code)]

use proto_rmdp::family::{FamilyLayer, Fragment, PrototypeFamily};
use proto_rmdp::mdp::{LayerLayout, LayeredMdp, StochasticPolicy};
use rand::Rng;

/// Random distribution over `len` outcomes. With `sparse`, each entry is
/// zeroed with probability 0.3 (at least one entry stays positive).
pub fn random_simplex<R: Rng>(rng: &mut R, len: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len)
        .map(|_| {
            if sparse && rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..len)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Random fragment for `layer`: full-length rows supported on layer `l + 1`.
pub fn random_fragment<R: Rng>(rng: &mut R, layout: &LayerLayout, layer: usize, actions: usize, sparse: bool) -> Fragment {
    let n = layout.num_states();
    let next = layout.layer_states(layer + 1);
    let rows = layout
        .layer_states(layer)
        .map(|_| {
            (0..actions)
                .map(|_| {
                    let mut row = vec![0.0; n];
                    let dist = random_simplex(rng, next.len(), sparse);
                    row[next.clone()].copy_from_slice(&dist);
                    row
                })
                .collect()
        })
        .collect();
    Fragment::new(rows)
}

/// Random instance with `1..=max_prototypes` prototypes per layer; the true
/// kernel is one randomly chosen prototype per layer.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    sizes: &[usize],
    actions: usize,
    max_prototypes: usize,
    sparse: bool,
) -> (LayeredMdp, PrototypeFamily) {
    let layout = LayerLayout::new(sizes).unwrap();
    let mut layers = Vec::new();
    let mut truth = Vec::new();
    for l in 0..layout.horizon() {
        let k = rng.gen_range(1..=max_prototypes);
        let fragments = (0..k).map(|_| random_fragment(rng, &layout, l, actions, sparse)).collect();
        let t = rng.gen_range(0..k);
        truth.push(t);
        layers.push(FamilyLayer::new(fragments, (0..k).collect(), Some(t)));
    }
    let family = PrototypeFamily::new(layout.clone(), actions, layers).unwrap();
    let kernel = family.assemble(&truth).unwrap();
    let reward = (0..layout.num_decision_states())
        .map(|_| (0..actions).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let mdp = LayeredMdp::new(layout, actions, reward, kernel).unwrap();
    (mdp, family)
}

/// Random stochastic policy; with `sparse`, some actions get probability 0.
pub fn random_policy<R: Rng>(rng: &mut R, mdp: &LayeredMdp, sparse: bool) -> StochasticPolicy {
    let probs = (0..mdp.layout().num_decision_states())
        .map(|_| random_simplex(rng, mdp.num_actions(), sparse))
        .collect();
    StochasticPolicy::new(probs)
}

/// Random layer sizes: `layers` layers, first and last of size 1.
pub fn random_sizes<R: Rng>(rng: &mut R, layers: usize, max_width: usize) -> Vec<usize> {
    (0..layers)
        .map(|l| if l == 0 || l + 1 == layers { 1 } else { rng.gen_range(1..=max_width) })
        .collect()
}
