//! Per-layer families of candidate transition kernels ("prototypes").

use crate::error::{Error, Result};
use crate::mdp::{l1, LayerLayout, LayeredMdp, TransitionKernel, ROW_TOLERANCE};

/// The rows one prototype assigns to the decision states of a single layer.
///
/// Indexed `[position in layer][action]`; each row is dense over the global
/// state table.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    rows: Vec<Vec<Vec<f64>>>,
}

impl Fragment {
    pub fn new(rows: Vec<Vec<Vec<f64>>>) -> Self {
        Self { rows }
    }

    /// Copies the rows of `kernel` for the states of `layer`.
    pub fn from_kernel(kernel: &TransitionKernel, layout: &LayerLayout, layer: usize) -> Self {
        let rows = layout
            .layer_states(layer)
            .map(|s| (0..kernel.num_actions()).map(|a| kernel.row(s, a).to_vec()).collect())
            .collect();
        Self { rows }
    }

    pub fn row(&self, position: usize, action: usize) -> &[f64] {
        &self.rows[position][action]
    }

    pub fn rows(&self) -> &[Vec<Vec<f64>>] {
        &self.rows
    }
}

/// Candidates for one decision layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyLayer {
    fragments: Vec<Fragment>,
    labels: Vec<usize>,
    true_index: Option<usize>,
}

impl FamilyLayer {
    /// `labels[k]` names the original prototype behind fragment `k`.
    pub fn new(fragments: Vec<Fragment>, labels: Vec<usize>, true_index: Option<usize>) -> Self {
        Self {
            fragments,
            labels,
            true_index,
        }
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn fragment(&self, k: usize) -> &Fragment {
        &self.fragments[k]
    }

    pub fn label(&self, k: usize) -> usize {
        self.labels[k]
    }

    pub fn true_index(&self) -> Option<usize> {
        self.true_index
    }
}

/// One list of candidate fragments per decision layer, with the index of the
/// true prototype when known.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFamily {
    layout: LayerLayout,
    num_actions: usize,
    layers: Vec<FamilyLayer>,
}

impl PrototypeFamily {
    /// Checks shapes and row stochasticity of every fragment.
    pub fn new(layout: LayerLayout, num_actions: usize, layers: Vec<FamilyLayer>) -> Result<Self> {
        if layers.len() != layout.horizon() {
            return Err(Error::Shape(format!(
                "family has {} layers, layout has {} decision layers",
                layers.len(),
                layout.horizon()
            )));
        }
        let n = layout.num_states();
        for (l, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::EmptyCandidateSet { layer: l });
            }
            if layer.labels.len() != layer.len() {
                return Err(Error::Shape(format!("layer {l}: labels do not match fragments")));
            }
            if let Some(t) = layer.true_index {
                if t >= layer.len() {
                    return Err(Error::UnknownPrototype {
                        layer: l,
                        index: t,
                        len: layer.len(),
                    });
                }
            }
            let next = layout.layer_states(l + 1);
            for (k, frag) in layer.fragments.iter().enumerate() {
                if frag.rows.len() != layout.layer_size(l) {
                    return Err(Error::Shape(format!("layer {l}, prototype {k}: wrong number of states")));
                }
                for (pos, per_action) in frag.rows.iter().enumerate() {
                    if per_action.len() != num_actions {
                        return Err(Error::Shape(format!("layer {l}, prototype {k}: wrong number of actions")));
                    }
                    for (a, row) in per_action.iter().enumerate() {
                        if row.len() != n {
                            return Err(Error::Shape(format!("layer {l}, prototype {k}: wrong row length")));
                        }
                        let sum: f64 = row.iter().sum();
                        let bad_support = row
                            .iter()
                            .enumerate()
                            .any(|(t, &p)| p < 0.0 || (p != 0.0 && !next.contains(&t)));
                        if bad_support || (sum - 1.0).abs() > ROW_TOLERANCE {
                            return Err(Error::Shape(format!(
                                "layer {l}, prototype {k}: row ({pos}, {a}) is not a distribution over the next layer"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            layout,
            num_actions,
            layers,
        })
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of decision layers.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &FamilyLayer {
        &self.layers[layer]
    }

    pub fn len(&self, layer: usize) -> usize {
        self.layers[layer].len()
    }

    pub fn true_index(&self, layer: usize) -> Option<usize> {
        self.layers[layer].true_index
    }

    /// True index of every layer, if all are known.
    pub fn true_indices(&self) -> Option<Vec<usize>> {
        self.layers.iter().map(|l| l.true_index).collect()
    }

    /// Row of prototype `k` at global state `state`.
    pub fn row(&self, k: usize, state: usize, action: usize) -> &[f64] {
        let l = self.layout.layer_of(state);
        self.layers[l].fragments[k].row(self.layout.position(state), action)
    }

    /// Kernel taking prototype `choice[l]` in every layer `l`.
    pub fn assemble(&self, choice: &[usize]) -> Result<TransitionKernel> {
        if choice.len() != self.num_layers() {
            return Err(Error::Shape("one prototype per layer required".into()));
        }
        let mut rows = Vec::with_capacity(self.layout.num_decision_states());
        for (l, &k) in choice.iter().enumerate() {
            let layer = &self.layers[l];
            if k >= layer.len() {
                return Err(Error::UnknownPrototype {
                    layer: l,
                    index: k,
                    len: layer.len(),
                });
            }
            rows.extend(layer.fragments[k].rows.iter().cloned());
        }
        TransitionKernel::new(&self.layout, self.num_actions, rows)
    }

    /// Whether the rows of the true prototypes equal `mdp`'s kernel exactly.
    pub fn matches_truth(&self, mdp: &LayeredMdp) -> bool {
        let Some(truth) = self.true_indices() else {
            return false;
        };
        (0..self.num_layers()).all(|l| {
            self.layers[l].fragments[truth[l]] == Fragment::from_kernel(mdp.true_kernel(), &self.layout, l)
        })
    }

    /// Collapses fragments that are bit-identical within a layer, keeping the
    /// lowest index of each group and remapping the true index.
    ///
    /// Duplicate fragments describe the same kernel rows, so the ambiguity set
    /// they generate is unchanged; only the bookkeeping gets smaller.
    pub fn merge_identical(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let mut fragments: Vec<Fragment> = Vec::new();
                let mut labels = Vec::new();
                let mut remap = Vec::with_capacity(layer.len());
                for (k, frag) in layer.fragments.iter().enumerate() {
                    match fragments.iter().position(|f| f == frag) {
                        Some(j) => remap.push(j),
                        None => {
                            remap.push(fragments.len());
                            fragments.push(frag.clone());
                            labels.push(layer.labels[k]);
                        }
                    }
                }
                FamilyLayer {
                    fragments,
                    labels,
                    true_index: layer.true_index.map(|t| remap[t]),
                }
            })
            .collect();
        Self {
            layout: self.layout.clone(),
            num_actions: self.num_actions,
            layers,
        }
    }

    /// `‖P^k(s,a) − P_0(s,a)‖₁` against `mdp`'s true kernel.
    pub fn distance_to_truth(&self, mdp: &LayeredMdp, k: usize, state: usize, action: usize) -> f64 {
        l1(self.row(k, state, action), mdp.true_kernel().row(state, action))
    }
}
