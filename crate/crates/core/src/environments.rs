//! The 5×4 GridWorld as a loop-free MDP, prototype generators with known
//! ground truth, and the structural constants `γ` and `h` of a family.
//!
//! Cell `(x1, x2)` lives in layer `x1 + x2`; within a layer cells are ordered
//! by ascending `x1`. Action 0 moves up (`x2 + 1`), action 1 moves right
//! (`x1 + 1`). At an interior cell the chosen direction succeeds with
//! probability `z` and the agent slips the other way otherwise. On the right
//! or top boundary there is only one inward move and both actions take it.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::family::{FamilyLayer, Fragment, PrototypeFamily};
use crate::mdp::{l1, LayerLayout, LayeredMdp, TransitionKernel};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;

/// Prototype generation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrototypeMode {
    /// Arithmetic progression of success probabilities with a fixed step.
    FixedGap,
    /// Independent uniform success probabilities.
    Random,
}

impl PrototypeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrototypeMode::FixedGap => "fixed-gap",
            PrototypeMode::Random => "random",
        }
    }
}

impl FromStr for PrototypeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed-gap" => Ok(PrototypeMode::FixedGap),
            "random" => Ok(PrototypeMode::Random),
            _ => Err(format!("unknown prototype mode `{s}` (expected fixed-gap or random)")),
        }
    }
}

/// Whether every layer uses the same prototype draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// One set of success probabilities and one true index for all layers.
    Shared,
    /// Independent draws per layer.
    PerLayer,
}

impl Sharing {
    pub fn as_str(self) -> &'static str {
        match self {
            Sharing::Shared => "shared",
            Sharing::PerLayer => "per-layer",
        }
    }
}

impl FromStr for Sharing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shared" => Ok(Sharing::Shared),
            "per-layer" => Ok(Sharing::PerLayer),
            _ => Err(format!("unknown sharing `{s}` (expected shared or per-layer)")),
        }
    }
}

/// Full description of a GridWorld instance and its prototype family.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    /// `((x1, x2), reward)`; the reward is paid for either action at the cell.
    pub reward_cells: Vec<((usize, usize), f64)>,
    /// Success probabilities `z[layer][k] = [z_up, z_right]`.
    pub z: Vec<Vec<[f64; 2]>>,
    pub true_index: Vec<usize>,
    pub mode: Option<PrototypeMode>,
    pub gap: Option<f64>,
    pub seed: Option<u64>,
}

/// The reward cells of the 5×4 benchmark.
pub fn default_reward_cells() -> Vec<((usize, usize), f64)> {
    vec![((2, 2), 3.0), ((1, 1), 5.0), ((1, 2), 1.0)]
}

impl GridWorldSpec {
    /// 5×4 grid with the benchmark rewards and a single prototype of success
    /// probability `z` for both actions.
    pub fn single(z: [f64; 2]) -> Self {
        let grid = Grid::new(5, 4);
        Self {
            width: 5,
            height: 4,
            reward_cells: default_reward_cells(),
            z: vec![vec![z]; grid.layout.horizon()],
            true_index: vec![0; grid.layout.horizon()],
            mode: None,
            gap: None,
            seed: None,
        }
    }

    pub fn num_prototypes(&self, layer: usize) -> usize {
        self.z[layer].len()
    }

    fn check(&self) -> Result<Grid> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Parameter {
                name: "grid",
                reason: format!("{}x{} grid is too small", self.width, self.height),
            });
        }
        let grid = Grid::new(self.width, self.height);
        let decision = grid.layout.horizon();
        if self.z.len() != decision || self.true_index.len() != decision {
            return Err(Error::Shape(format!(
                "expected prototypes and a true index for {decision} layers"
            )));
        }
        for &((x1, x2), r) in &self.reward_cells {
            if x1 >= self.width || x2 >= self.height {
                return Err(Error::Parameter {
                    name: "reward_cells",
                    reason: format!("cell ({x1}, {x2}) is outside the {}x{} grid", self.width, self.height),
                });
            }
            if !r.is_finite() || r < 0.0 {
                return Err(Error::Parameter {
                    name: "reward_cells",
                    reason: format!("reward {r} at ({x1}, {x2}) must be nonnegative"),
                });
            }
        }
        for (l, per_k) in self.z.iter().enumerate() {
            if per_k.is_empty() {
                return Err(Error::EmptyCandidateSet { layer: l });
            }
            if self.true_index[l] >= per_k.len() {
                return Err(Error::UnknownPrototype {
                    layer: l,
                    index: self.true_index[l],
                    len: per_k.len(),
                });
            }
            if per_k.iter().flatten().any(|z| !(0.0..=1.0).contains(z)) {
                return Err(Error::Parameter {
                    name: "z",
                    reason: format!("layer {l} has a success probability outside [0, 1]"),
                });
            }
        }
        Ok(grid)
    }

    /// The MDP under the true prototype of every layer.
    pub fn build(&self) -> Result<LayeredMdp> {
        Ok(self.instantiate()?.mdp)
    }

    /// MDP and (merged) prototype family.
    pub fn instantiate(&self) -> Result<GridWorld> {
        let grid = self.check()?;
        let layout = grid.layout.clone();
        let decision = layout.horizon();

        let kernel_for = |choice: &dyn Fn(usize) -> [f64; 2]| {
            TransitionKernel::from_successor_fn(&layout, 2, |s, a, t| {
                let z = choice(layout.layer_of(s))[a];
                grid.transition(s, a, t, z)
            })
        };
        let truth = kernel_for(&|l| self.z[l][self.true_index[l]])?;

        let mut reward = vec![vec![0.0; 2]; layout.num_decision_states()];
        for &((x1, x2), r) in &self.reward_cells {
            let s = grid.state_of(x1, x2);
            if layout.is_decision_state(s) {
                reward[s] = vec![r; 2];
            }
        }
        let mdp = LayeredMdp::new(layout.clone(), 2, reward, truth)?;

        let mut layers = Vec::with_capacity(decision);
        for l in 0..decision {
            let fragments = (0..self.z[l].len())
                .map(|k| {
                    let rows = layout
                        .layer_states(l)
                        .map(|s| {
                            (0..2)
                                .map(|a| {
                                    let mut row = vec![0.0; layout.num_states()];
                                    for t in layout.layer_states(l + 1) {
                                        row[t] = grid.transition(s, a, t, self.z[l][k][a]);
                                    }
                                    row
                                })
                                .collect()
                        })
                        .collect();
                    Fragment::new(rows)
                })
                .collect();
            layers.push(FamilyLayer::new(
                fragments,
                (0..self.z[l].len()).collect(),
                Some(self.true_index[l]),
            ));
        }
        let family = PrototypeFamily::new(layout, 2, layers)?.merge_identical();
        Ok(GridWorld {
            spec: self.clone(),
            grid,
            mdp,
            family,
        })
    }

    /// Line-oriented description that [`GridWorldSpec::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "grid {} {}", self.width, self.height);
        for &((x1, x2), r) in &self.reward_cells {
            let _ = writeln!(out, "reward {x1} {x2} {r}");
        }
        if let Some(mode) = self.mode {
            let _ = writeln!(out, "mode {}", mode.as_str());
        }
        if let Some(gap) = self.gap {
            let _ = writeln!(out, "gap {gap}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed {seed}");
        }
        for (l, per_k) in self.z.iter().enumerate() {
            let _ = writeln!(out, "layer {l} true {}", self.true_index[l]);
            for (k, z) in per_k.iter().enumerate() {
                let _ = writeln!(out, "z {l} {k} {} {}", z[0], z[1]);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dims = None;
        let mut reward_cells = Vec::new();
        let mut mode = None;
        let mut gap = None;
        let mut seed = None;
        let mut truth: Vec<Option<usize>> = Vec::new();
        let mut z: Vec<Vec<[f64; 2]>> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |reason: String| Error::Parse { line, reason };
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let arity = |n: usize| {
                if fields.len() == n + 1 {
                    Ok(())
                } else {
                    Err(err(format!("`{}` takes {n} values", fields[0])))
                }
            };
            let num = |j: usize| -> Result<usize> {
                fields[j].parse().map_err(|_| err(format!("bad integer `{}`", fields[j])))
            };
            let real = |j: usize| -> Result<f64> {
                fields[j].parse().map_err(|_| err(format!("bad number `{}`", fields[j])))
            };
            match fields[0] {
                "grid" => {
                    arity(2)?;
                    dims = Some((num(1)?, num(2)?));
                }
                "reward" => {
                    arity(3)?;
                    reward_cells.push(((num(1)?, num(2)?), real(3)?));
                }
                "mode" => {
                    arity(1)?;
                    mode = Some(fields[1].parse::<PrototypeMode>().map_err(err)?);
                }
                "gap" => {
                    arity(1)?;
                    gap = Some(real(1)?);
                }
                "seed" => {
                    arity(1)?;
                    seed = Some(fields[1].parse().map_err(|_| err(format!("bad seed `{}`", fields[1])))?);
                }
                "layer" => {
                    if fields.len() != 4 || fields[2] != "true" {
                        return Err(err("expected `layer <l> true <k>`".into()));
                    }
                    let l = num(1)?;
                    if l != truth.len() {
                        return Err(err(format!("layer {l} out of order")));
                    }
                    truth.push(Some(num(3)?));
                    z.push(Vec::new());
                }
                "z" => {
                    arity(4)?;
                    let (l, k) = (num(1)?, num(2)?);
                    if l + 1 != z.len() || k != z[l].len() {
                        return Err(err(format!("prototype ({l}, {k}) out of order")));
                    }
                    z[l].push([real(3)?, real(4)?]);
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let (width, height) = dims.ok_or(Error::Parse {
            line: 0,
            reason: "missing `grid` line".into(),
        })?;
        let spec = Self {
            width,
            height,
            reward_cells,
            z,
            true_index: truth.into_iter().map(|t| t.unwrap()).collect(),
            mode,
            gap,
            seed,
        };
        spec.check()?;
        Ok(spec)
    }
}

/// Cell geometry of a `width × height` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    layout: LayerLayout,
    cells: Vec<(usize, usize)>,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Self {
        let num_layers = width + height - 1;
        let mut cells = Vec::with_capacity(width * height);
        let mut sizes = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let before = cells.len();
            for x1 in 0..width {
                if l >= x1 && l - x1 < height {
                    cells.push((x1, l - x1));
                }
            }
            sizes.push(cells.len() - before);
        }
        let layout = LayerLayout::new(&sizes).expect("grid layers are non-empty");
        Self {
            width,
            height,
            layout,
            cells,
        }
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_of(&self, x1: usize, x2: usize) -> usize {
        assert!(x1 < self.width && x2 < self.height, "cell ({x1}, {x2}) outside grid");
        let l = x1 + x2;
        let first_x1 = l.saturating_sub(self.height - 1);
        self.layout.state(l, x1 - first_x1)
    }

    /// Whether both moves are available at `state`.
    pub fn is_interior(&self, state: usize) -> bool {
        let (x1, x2) = self.cells[state];
        x1 + 1 < self.width && x2 + 1 < self.height
    }

    fn transition(&self, state: usize, action: usize, next: usize, z: f64) -> f64 {
        let (x1, x2) = self.cells[state];
        let target = self.cells[next];
        let up = (x1, x2 + 1);
        let right = (x1 + 1, x2);
        if x1 + 1 == self.width {
            return if target == up { 1.0 } else { 0.0 };
        }
        if x2 + 1 == self.height {
            return if target == right { 1.0 } else { 0.0 };
        }
        let (hit, miss) = if action == UP { (up, right) } else { (right, up) };
        if target == hit {
            z
        } else if target == miss {
            1.0 - z
        } else {
            0.0
        }
    }
}

/// A built GridWorld: spec, geometry, true MDP and prototype family.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub spec: GridWorldSpec,
    pub grid: Grid,
    pub mdp: LayeredMdp,
    pub family: PrototypeFamily,
}

/// Layered MDP for `spec` under its true prototypes.
pub fn build_gridworld(spec: &GridWorldSpec) -> Result<LayeredMdp> {
    spec.build()
}

fn draw_per_layer<R: Rng + ?Sized>(
    layers: usize,
    k: usize,
    sharing: Sharing,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> Vec<[f64; 2]>,
) -> (Vec<Vec<[f64; 2]>>, Vec<usize>) {
    match sharing {
        Sharing::Shared => {
            let z = draw(rng);
            let t = rng.gen_range(0..k);
            (vec![z; layers], vec![t; layers])
        }
        Sharing::PerLayer => (0..layers)
            .map(|_| {
                let z = draw(rng);
                (z, rng.gen_range(0..k))
            })
            .unzip(),
    }
}

/// Fixed-gap family on the 5×4 benchmark: per action an offset `o` is drawn
/// from `U[0, 1 − (K−1)g]` and prototype `k` uses `z_k = o + k g` at every
/// state. The true index is uniform.
pub fn generate_fixed_gap_prototypes<R: Rng + ?Sized>(
    k: usize,
    gap: f64,
    sharing: Sharing,
    rng: &mut R,
) -> Result<GridWorld> {
    if k == 0 {
        return Err(Error::Parameter {
            name: "prototypes",
            reason: "need at least one prototype".into(),
        });
    }
    let span = (k - 1) as f64 * gap;
    if !(gap >= 0.0) || span > 1.0 {
        return Err(Error::Parameter {
            name: "gap",
            reason: format!("{k} prototypes with gap {gap} do not fit in [0, 1]"),
        });
    }
    let layers = Grid::new(5, 4).layout.horizon();
    let (z, true_index) = draw_per_layer(layers, k, sharing, rng, |rng| {
        let offsets = [rng.gen_range(0.0..=1.0 - span), rng.gen_range(0.0..=1.0 - span)];
        (0..k)
            .map(|i| [offsets[0] + i as f64 * gap, offsets[1] + i as f64 * gap])
            .collect()
    });
    GridWorldSpec {
        z,
        true_index,
        mode: Some(PrototypeMode::FixedGap),
        gap: Some(gap),
        ..GridWorldSpec::single([0.5, 0.5])
    }
    .instantiate()
}

/// Random family on the 5×4 benchmark: each `z_k(a)` is uniform on `[0, 1]`.
pub fn generate_random_prototypes<R: Rng + ?Sized>(k: usize, sharing: Sharing, rng: &mut R) -> Result<GridWorld> {
    if k == 0 {
        return Err(Error::Parameter {
            name: "prototypes",
            reason: "need at least one prototype".into(),
        });
    }
    let layers = Grid::new(5, 4).layout.horizon();
    let (z, true_index) = draw_per_layer(layers, k, sharing, rng, |rng| {
        (0..k).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()
    });
    GridWorldSpec {
        z,
        true_index,
        mode: Some(PrototypeMode::Random),
        ..GridWorldSpec::single([0.5, 0.5])
    }
    .instantiate()
}

/// Gap-ratio constant `γ` of a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma {
    /// Largest ratio of a wrong prototype's maximal gap to its smallest
    /// nonzero gap within a layer. 1 when no wrong prototype differs anywhere.
    pub value: f64,
    /// Some wrong prototype equals the truth at one pair of a layer but not
    /// at another, so the ratio against that pair is unbounded.
    pub partial_match: bool,
}

impl Gamma {
    /// The unrestricted constant: infinite under a partial match.
    pub fn strict(&self) -> f64 {
        if self.partial_match {
            f64::INFINITY
        } else {
            self.value
        }
    }
}

fn layer_gaps(family: &PrototypeFamily, mdp: &LayeredMdp, layer: usize, k: usize) -> Vec<f64> {
    mdp.layout()
        .layer_states(layer)
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| family.distance_to_truth(mdp, k, s, a))
        .collect()
}

fn wrong_prototypes(family: &PrototypeFamily, layer: usize) -> impl Iterator<Item = usize> {
    let truth = family.true_index(layer);
    (0..family.len(layer)).filter(move |&k| Some(k) != truth)
}

/// `γ` over all layers and wrong prototypes, using pairs with a nonzero gap
/// as reference pairs.
pub fn compute_gamma(family: &PrototypeFamily, mdp: &LayeredMdp) -> Gamma {
    let mut value: f64 = 1.0;
    let mut partial_match = false;
    for l in 0..family.num_layers() {
        for k in wrong_prototypes(family, l) {
            let gaps = layer_gaps(family, mdp, l, k);
            let max = gaps.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                continue;
            }
            let min_nonzero = gaps.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
            partial_match |= gaps.contains(&0.0);
            value = value.max(max / min_nonzero);
        }
    }
    Gamma { value, partial_match }
}

/// Per-layer `γ_l` without restricting the reference pair: the largest
/// ratio of maximal to minimal gap over the wrong prototypes of the layer.
/// Infinite when a wrong prototype agrees with the truth at some pair but not
/// at all of them; 1 when no wrong prototype differs anywhere.
pub fn compute_layer_gamma(family: &PrototypeFamily, mdp: &LayeredMdp) -> Vec<f64> {
    (0..family.num_layers())
        .map(|l| {
            wrong_prototypes(family, l)
                .map(|k| {
                    let gaps = layer_gaps(family, mdp, l, k);
                    let max = gaps.iter().copied().fold(0.0, f64::max);
                    let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
                    if max == 0.0 {
                        1.0
                    } else {
                        max / min
                    }
                })
                .fold(1.0, f64::max)
        })
        .collect()
}

/// Separation between the truth and the wrong prototypes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    /// Smallest nonzero gap; infinite when no layer has a wrong prototype,
    /// 0 when a wrong prototype equals the truth on a whole layer.
    pub h: f64,
    pub degenerate: bool,
    pub no_competitor: bool,
}

/// `h`: the smallest distance between the truth and a wrong prototype.
///
/// Pairs where a wrong prototype agrees with the truth (GridWorld boundary
/// cells, where every prototype is deterministic) carry no information and
/// are skipped.
pub fn compute_h(family: &PrototypeFamily, mdp: &LayeredMdp) -> Separation {
    let mut h = f64::INFINITY;
    let mut any = false;
    for l in 0..family.num_layers() {
        for k in wrong_prototypes(family, l) {
            any = true;
            let gaps = layer_gaps(family, mdp, l, k);
            if gaps.iter().all(|&d| d == 0.0) {
                return Separation {
                    h: 0.0,
                    degenerate: true,
                    no_competitor: false,
                };
            }
            h = gaps.iter().copied().filter(|&d| d > 0.0).fold(h, f64::min);
        }
    }
    Separation {
        h,
        degenerate: false,
        no_competitor: !any,
    }
}

/// `‖P^k(s, a) − P^j(s, a)‖₁` maximized over the pairs of a layer.
pub fn max_layer_distance(family: &PrototypeFamily, layer: usize, k: usize, j: usize) -> f64 {
    let layout = family.layout();
    layout
        .layer_states(layer)
        .flat_map(|s| (0..family.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| l1(family.row(k, s, a), family.row(j, s, a)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_trajectory, Policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn benchmark_layers() {
        let world = GridWorldSpec::single([0.7, 0.6]).instantiate().unwrap();
        let layout = world.mdp.layout();
        assert_eq!(layout.layer_sizes(), vec![1, 2, 3, 4, 4, 3, 2, 1]);
        assert_eq!(layout.num_states(), 20);
        assert_eq!(layout.num_layers(), 8);
        assert!(world.mdp.validate().is_valid());
        for s in 0..20 {
            let (x1, x2) = world.grid.cell(s);
            assert_eq!(layout.layer_of(s), x1 + x2);
            assert_eq!(world.grid.state_of(x1, x2), s);
        }
    }

    #[test]
    fn rewards_sit_on_their_cells() {
        let world = GridWorldSpec::single([0.7, 0.6]).instantiate().unwrap();
        let g = &world.grid;
        assert_eq!(world.mdp.reward(g.state_of(2, 2), UP), 3.0);
        assert_eq!(world.mdp.reward(g.state_of(1, 1), RIGHT), 5.0);
        assert_eq!(world.mdp.reward(g.state_of(1, 2), UP), 1.0);
        assert_eq!(world.mdp.reward(g.state_of(0, 0), UP), 0.0);
        assert_eq!(world.mdp.max_reward(), 5.0);
    }

    #[test]
    fn boundary_moves_inward() {
        let world = GridWorldSpec::single([0.7, 0.6]).instantiate().unwrap();
        let g = &world.grid;
        let k = world.mdp.true_kernel();
        for a in 0..2 {
            assert_eq!(k.prob(g.state_of(4, 1), a, g.state_of(4, 2)), 1.0);
            assert_eq!(k.prob(g.state_of(2, 3), a, g.state_of(3, 3)), 1.0);
        }
        let s = g.state_of(1, 1);
        assert_eq!(k.prob(s, UP, g.state_of(1, 2)), 0.7);
        assert!((k.prob(s, UP, g.state_of(2, 1)) - 0.3).abs() < 1e-15);
        assert_eq!(k.prob(s, RIGHT, g.state_of(2, 1)), 0.6);
    }

    #[test]
    fn every_episode_reaches_goal_in_seven_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let world = generate_random_prototypes(3, Sharing::PerLayer, &mut rng).unwrap();
        let goal = world.grid.state_of(4, 3);
        for i in 0..200 {
            let policy = Policy::new((0..19).map(|s| (s + i) % 2).collect());
            let path = sample_trajectory(world.mdp.true_kernel(), &policy, &world.mdp, &mut rng);
            assert_eq!(path.len(), 7);
            assert_eq!(path.last().unwrap().next, goal);
        }
    }

    #[test]
    fn fixed_gap_progression() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut rng).unwrap();
        for per_k in &world.spec.z {
            for a in 0..2 {
                for i in 0..4 {
                    for j in 0..4 {
                        let d = (per_k[i][a] - per_k[j][a]).abs();
                        assert!((d - i.abs_diff(j) as f64 * 0.2).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(world.family.matches_truth(&world.mdp));
        // the all-boundary layer collapses to one fragment
        assert_eq!(world.family.len(6), 1);
        assert_eq!(world.family.len(0), 4);
    }

    #[test]
    fn fixed_gap_rejects_overflowing_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_fixed_gap_prototypes(4, 0.34, Sharing::Shared, &mut rng).is_err());
        assert!(generate_fixed_gap_prototypes(1, 5.0, Sharing::Shared, &mut rng).is_ok());
    }

    #[test]
    fn fixed_gap_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let world = generate_fixed_gap_prototypes(4, 0.2, Sharing::Shared, &mut rng).unwrap();
        let gamma = compute_gamma(&world.family, &world.mdp);
        assert!((gamma.value - 1.0).abs() < 1e-12);
        assert!(gamma.partial_match);
        assert!(gamma.strict().is_infinite());
        let per_layer = compute_layer_gamma(&world.family, &world.mdp);
        // layers 0..=2 hold interior cells only; 3..=5 mix in boundary cells
        for l in 0..3 {
            assert!((per_layer[l] - 1.0).abs() < 1e-12);
        }
        for l in 3..6 {
            assert!(per_layer[l].is_infinite());
        }
        assert_eq!(per_layer[6], 1.0);
        let sep = compute_h(&world.family, &world.mdp);
        assert!((sep.h - 0.4).abs() < 1e-12);
        assert!(!sep.degenerate);
    }

    #[test]
    fn single_prototype_has_no_competitor() {
        let world = GridWorldSpec::single([0.5, 0.5]).instantiate().unwrap();
        let sep = compute_h(&world.family, &world.mdp);
        assert!(sep.h.is_infinite() && sep.no_competitor);
        assert_eq!(compute_gamma(&world.family, &world.mdp).value, 1.0);
    }

    #[test]
    fn duplicate_of_truth_is_degenerate() {
        let world = GridWorldSpec::single([0.5, 0.5]).instantiate().unwrap();
        let layout = world.mdp.layout().clone();
        let layers = (0..7)
            .map(|l| {
                let f = Fragment::from_kernel(world.mdp.true_kernel(), &layout, l);
                FamilyLayer::new(vec![f.clone(), f], vec![0, 1], Some(1))
            })
            .collect();
        let family = PrototypeFamily::new(layout, 2, layers).unwrap();
        let sep = compute_h(&family, &world.mdp);
        assert_eq!(sep.h, 0.0);
        assert!(sep.degenerate);
    }

    #[test]
    fn spec_text_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut world = generate_random_prototypes(4, Sharing::PerLayer, &mut rng).unwrap();
        world.spec.seed = Some(21);
        let text = world.spec.to_text();
        let parsed = GridWorldSpec::parse(&text).unwrap();
        assert_eq!(parsed, world.spec);
        assert_eq!(parsed.build().unwrap(), world.mdp);
    }

    #[test]
    fn parse_rejects_reward_outside_grid() {
        let mut text = GridWorldSpec::single([0.5, 0.5]).to_text();
        text.push_str("reward 7 1 2\n");
        assert!(GridWorldSpec::parse(&text).is_err());
        assert!(matches!(
            GridWorldSpec::parse("grid 5 4\nbogus 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
