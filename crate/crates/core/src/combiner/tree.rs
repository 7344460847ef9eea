use serde::{Deserialize, Serialize};

use super::node::{CombinerNode, NodeDiscount, NodeRule};
use crate::confidence::{ConfidenceParams, Variant, MIN_LOG_INV_Z, WINDOW_FLOOR};
use crate::error::{bounded, invalid, Error, Result};

/// Recipe for the combination nodes of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub log_inv_z: f64,
    pub window: f64,
    pub variant: Variant,
    pub rule: NodeRule,
    pub discount: NodeDiscount,
    /// Skip the `n ≥ 40·ln(1/Z)` check; `Z ≤ e^{-1}` is still enforced.
    #[serde(default)]
    pub waive_window_floor: bool,
}

impl NodeConfig {
    /// Ramp-shaped nodes with `L = √n` and a constant discount.
    pub fn new(log_inv_z: f64, window: f64, rule: NodeRule) -> Self {
        Self {
            log_inv_z,
            window,
            variant: Variant::RampExp,
            rule,
            discount: NodeDiscount::Constant,
            waive_window_floor: false,
        }
    }

    pub fn with_discount(mut self, discount: NodeDiscount) -> Self {
        self.discount = discount;
        self
    }

    fn params(&self) -> Result<ConfidenceParams> {
        let (l, n) = (self.window.sqrt(), self.window);
        if self.waive_window_floor {
            let p = ConfidenceParams::new_unchecked(self.log_inv_z, l, n, self.variant)?;
            if p.log_inv_z() < MIN_LOG_INV_Z {
                return Err(Error::Precondition("loss scale Z exceeds e^-1".into()));
            }
            Ok(p)
        } else {
            ConfidenceParams::from_log_inv_z(self.log_inv_z, l, n, self.variant)
        }
    }

    fn build(&self) -> Result<CombinerNode> {
        Ok(CombinerNode::new(self.params()?, self.rule).with_discount(self.discount))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Slot {
    Leaf {
        strategy: usize,
    },
    Node {
        left: usize,
        right: usize,
        node: CombinerNode,
    },
}

/// One level of a multiscale tree: strategy `strategy` compared at window
/// `2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub strategy: usize,
    pub exponent: u32,
}

/// How the tree was laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Single,
    /// `order[0]` is the base; each later strategy improves on the mixture.
    Linear {
        order: Vec<usize>,
    },
    Balanced,
    /// Levels from the leaves to the root.
    MultiScale {
        levels: Vec<Level>,
    },
    /// Left spine; node `j` (root is 1) carries `Z_j = 1/j²`.
    Unbalanced,
}

/// Root-to-leaf path statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafPath {
    pub strategy: usize,
    /// Left transitions on the path from the root.
    pub left: usize,
    /// Right transitions on the path from the root.
    pub right: usize,
}

/// Serialized node record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub id: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub strategy: Option<usize>,
    pub window: Option<f64>,
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    pub log_inv_z: Option<f64>,
    pub schedule: Option<NodeRule>,
}

/// Outcome of one tree step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStep {
    pub root_payoff: f64,
    /// Probability of each strategy, fixed before the payoffs were seen.
    pub weights: Vec<f64>,
}

/// Binary tree of combination nodes over `n_strategies` payoff streams.
///
/// Slots are stored children-before-parents; the root is the last slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTree {
    slots: Vec<Slot>,
    n_strategies: usize,
    layout: Layout,
    #[serde(skip)]
    wt: Vec<f64>,
    #[serde(skip)]
    buf: Vec<f64>,
}

struct Builder {
    slots: Vec<Slot>,
}

impl Builder {
    fn new() -> Self {
        Self { slots: Vec::new() }
    }

    fn leaf(&mut self, strategy: usize) -> usize {
        self.slots.push(Slot::Leaf { strategy });
        self.slots.len() - 1
    }

    fn node(&mut self, left: usize, right: usize, node: CombinerNode) -> usize {
        self.slots.push(Slot::Node { left, right, node });
        self.slots.len() - 1
    }

    fn finish(self, n_strategies: usize, layout: Layout) -> ComparisonTree {
        let len = self.slots.len();
        ComparisonTree {
            slots: self.slots,
            n_strategies,
            layout,
            wt: vec![0.0; len],
            buf: vec![0.0; len],
        }
    }
}

fn check_strategy(s: usize, n: usize) -> Result<()> {
    if s >= n {
        return Err(invalid(
            "strategy",
            format!("index {s} out of range for {n} strategies"),
        ));
    }
    Ok(())
}

impl ComparisonTree {
    /// Degenerate tree: one leaf.
    pub fn single(strategy: usize, n_strategies: usize) -> Result<Self> {
        check_strategy(strategy, n_strategies)?;
        let mut b = Builder::new();
        b.leaf(strategy);
        Ok(b.finish(n_strategies, Layout::Single))
    }

    /// Left-spine tree: `order[0]` is the base, each later strategy is the
    /// improver at the next node up.
    pub fn linear(order: &[usize], n_strategies: usize, config: &NodeConfig) -> Result<Self> {
        let (&first, rest) = order
            .split_first()
            .ok_or_else(|| invalid("order", "at least one strategy required"))?;
        for &s in order {
            check_strategy(s, n_strategies)?;
        }
        let mut b = Builder::new();
        let mut acc = b.leaf(first);
        for &s in rest {
            let r = b.leaf(s);
            acc = b.node(acc, r, config.build()?);
        }
        Ok(b.finish(n_strategies, Layout::Linear { order: order.to_vec() }))
    }

    /// Balanced tree over strategies `0..n`, first half on the left.
    pub fn balanced(n_strategies: usize, config: &NodeConfig) -> Result<Self> {
        if n_strategies == 0 {
            return Err(invalid("N", "at least one strategy required"));
        }
        fn rec(b: &mut Builder, lo: usize, hi: usize, config: &NodeConfig) -> Result<usize> {
            if hi - lo == 1 {
                return Ok(b.leaf(lo));
            }
            let mid = lo + (hi - lo) / 2;
            let l = rec(b, lo, mid, config)?;
            let r = rec(b, mid, hi, config)?;
            Ok(b.node(l, r, config.build()?))
        }
        let mut b = Builder::new();
        rec(&mut b, 0, n_strategies, config)?;
        Ok(b.finish(n_strategies, Layout::Balanced))
    }

    pub fn n_strategies(&self) -> usize {
        self.n_strategies
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Number of combination nodes.
    pub fn n_nodes(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Node { .. })).count()
    }

    fn root(&self) -> usize {
        self.slots.len() - 1
    }

    /// Combination nodes in storage order (children first).
    pub fn nodes(&self) -> impl Iterator<Item = &CombinerNode> {
        self.slots.iter().filter_map(|s| match s {
            Slot::Node { node, .. } => Some(node),
            Slot::Leaf { .. } => None,
        })
    }

    /// Left/right transition counts from the root to every leaf.
    pub fn leaf_paths(&self) -> Vec<LeafPath> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root(), 0usize, 0usize)];
        while let Some((i, l, r)) = stack.pop() {
            match &self.slots[i] {
                Slot::Leaf { strategy } => out.push(LeafPath {
                    strategy: *strategy,
                    left: l,
                    right: r,
                }),
                Slot::Node { left, right, .. } => {
                    stack.push((*right, l, r + 1));
                    stack.push((*left, l + 1, r));
                }
            }
        }
        out
    }

    /// Node records for serialization, children first.
    pub fn layout_records(&self) -> Vec<LayoutRecord> {
        self.slots
            .iter()
            .enumerate()
            .map(|(id, s)| match s {
                Slot::Leaf { strategy } => LayoutRecord {
                    id,
                    left: None,
                    right: None,
                    strategy: Some(*strategy),
                    window: None,
                    z: None,
                    log_inv_z: None,
                    schedule: None,
                },
                Slot::Node { left, right, node } => LayoutRecord {
                    id,
                    left: Some(*left),
                    right: Some(*right),
                    strategy: None,
                    window: Some(node.params().n()),
                    z: Some(node.params().z()),
                    log_inv_z: Some(node.params().log_inv_z()),
                    schedule: Some(node.rule()),
                },
            })
            .collect()
    }

    /// JSON array of [`LayoutRecord`]s.
    pub fn to_layout_json(&self) -> String {
        serde_json::to_string_pretty(&self.layout_records()).expect("layout records serialize")
    }

    fn ensure_scratch(&mut self) {
        if self.wt.len() != self.slots.len() {
            self.wt = vec![0.0; self.slots.len()];
            self.buf = vec![0.0; self.slots.len()];
        }
    }

    fn refresh_node_weights(&mut self) {
        self.ensure_scratch();
        for (i, s) in self.slots.iter().enumerate() {
            if let Slot::Node { node, .. } = s {
                self.wt[i] = node.weight();
            }
        }
    }

    fn spread_mass(&mut self, weights: &mut [f64]) {
        weights.iter_mut().for_each(|w| *w = 0.0);
        let root = self.root();
        self.buf.iter_mut().for_each(|m| *m = 0.0);
        self.buf[root] = 1.0;
        for i in (0..self.slots.len()).rev() {
            let m = self.buf[i];
            match &self.slots[i] {
                Slot::Leaf { strategy } => weights[*strategy] += m,
                Slot::Node { left, right, .. } => {
                    let w = self.wt[i];
                    self.buf[*left] += m * (1.0 - w);
                    self.buf[*right] += m * w;
                }
            }
        }
    }

    fn absorb(&mut self, payoffs: &[f64]) -> f64 {
        for i in 0..self.slots.len() {
            match &mut self.slots[i] {
                Slot::Leaf { strategy } => self.buf[i] = payoffs[*strategy],
                Slot::Node { left, right, node } => {
                    let (l, r) = (self.buf[*left], self.buf[*right]);
                    let w = self.wt[i];
                    self.buf[i] = (1.0 - w) * l + w * r;
                    node.update(r - l);
                }
            }
        }
        self.buf[self.root()]
    }

    fn check_payoffs(&self, payoffs: &[f64]) -> Result<()> {
        if payoffs.len() != self.n_strategies {
            return Err(Error::Dimension {
                expected: self.n_strategies,
                got: payoffs.len(),
            });
        }
        for &p in payoffs {
            bounded(0, p, 1.0)?;
        }
        Ok(())
    }

    /// Strategy distribution for the coming step, without advancing.
    pub fn leaf_weights(&mut self, out: &mut [f64]) -> Result<()> {
        if out.len() != self.n_strategies {
            return Err(Error::Dimension {
                expected: self.n_strategies,
                got: out.len(),
            });
        }
        self.refresh_node_weights();
        self.spread_mass(out);
        Ok(())
    }

    /// Feeds one step of payoffs and returns the root payoff.
    pub fn observe(&mut self, payoffs: &[f64]) -> Result<f64> {
        self.check_payoffs(payoffs)?;
        self.refresh_node_weights();
        Ok(self.absorb(payoffs))
    }

    /// Writes the pre-step strategy distribution into `weights`, then feeds
    /// `payoffs` bottom-up. Returns the root payoff.
    pub fn step_into(&mut self, payoffs: &[f64], weights: &mut [f64]) -> Result<f64> {
        self.check_payoffs(payoffs)?;
        if weights.len() != self.n_strategies {
            return Err(Error::Dimension {
                expected: self.n_strategies,
                got: weights.len(),
            });
        }
        self.refresh_node_weights();
        self.spread_mass(weights);
        Ok(self.absorb(payoffs))
    }

    /// Allocating form of [`step_into`](Self::step_into).
    pub fn combine_tree_step(&mut self, payoffs: &[f64]) -> Result<TreeStep> {
        let mut weights = vec![0.0; self.n_strategies];
        let root_payoff = self.step_into(payoffs, &mut weights)?;
        Ok(TreeStep { root_payoff, weights })
    }

    /// Runs the tree over rows of per-strategy payoffs.
    pub fn run(&mut self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.n_strategies];
        rows.iter().map(|r| self.step_into(r, &mut w)).collect()
    }
}

/// Multiscale tree options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleOptions {
    pub rule: NodeRule,
    /// Enforce `Z ≤ (N·T)^{-2}`.
    pub enforce_z_bound: bool,
}

impl Default for MultiScaleOptions {
    fn default() -> Self {
        Self {
            rule: NodeRule::Clipped,
            enforce_z_bound: true,
        }
    }
}

/// Window exponents `j ∈ 1..=⌈log₂ T⌉` with `2^j ≥ 40·ln(1/Z)`.
pub fn multiscale_exponents(horizon: usize, log_inv_z: f64) -> Vec<u32> {
    let jmax = (horizon as f64).log2().ceil().max(1.0) as u32;
    (1..=jmax)
        .filter(|&j| 2f64.powi(j as i32) >= WINDOW_FLOOR * log_inv_z * (1.0 - 1e-12))
        .collect()
}

/// Tree of `N × log T` levels: strategy `i` at window `2^j`, leaves-to-root in
/// order of increasing `j` then `i`, on top of the base strategy `N − 1`.
pub fn build_multiscale_tree(n: usize, horizon: usize, z: f64) -> Result<ComparisonTree> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(invalid("Z", format!("must be positive, got {z}")));
    }
    build_multiscale_tree_with(n, horizon, -z.ln(), MultiScaleOptions::default())
}

/// [`build_multiscale_tree`] taking `ln(1/Z)` and explicit options.
pub fn build_multiscale_tree_with(
    n: usize,
    horizon: usize,
    log_inv_z: f64,
    opts: MultiScaleOptions,
) -> Result<ComparisonTree> {
    if n == 0 {
        return Err(invalid("N", "at least one strategy required"));
    }
    if horizon < 2 {
        return Err(invalid("T", format!("horizon must be at least 2, got {horizon}")));
    }
    let bound = 2.0 * ((n * horizon) as f64).ln();
    if opts.enforce_z_bound && log_inv_z < bound * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "Z = e^-{log_inv_z} exceeds (N·T)^-2 = e^-{bound}"
        )));
    }
    let mut b = Builder::new();
    let mut acc = b.leaf(n - 1);
    let mut levels = Vec::new();
    for j in multiscale_exponents(horizon, log_inv_z) {
        let cfg = NodeConfig::new(log_inv_z, 2f64.powi(j as i32), opts.rule);
        for i in 0..n {
            let r = b.leaf(i);
            acc = b.node(acc, r, cfg.build()?);
            levels.push(Level {
                strategy: i,
                exponent: j,
            });
        }
    }
    Ok(b.finish(n, Layout::MultiScale { levels }))
}

/// Left-spine tree over strategies ordered by complexity (index 0 simplest).
///
/// Node `j` (the root is node 1) has strategy `j − 1` as its right child and
/// uses `Z_j = 1/j²`, clamped to `[e^{−n/40}, e^{−1}]` for window `n = T`. The
/// deepest node's left child is the last strategy.
pub fn build_unbalanced_tree(k: usize, horizon: usize, rule: NodeRule) -> Result<ComparisonTree> {
    if k == 0 {
        return Err(invalid("k", "at least one strategy required"));
    }
    let window = horizon as f64;
    if window < WINDOW_FLOOR * MIN_LOG_INV_Z {
        return Err(Error::Precondition(format!(
            "horizon {horizon} is below the smallest admissible window {}",
            WINDOW_FLOOR * MIN_LOG_INV_Z
        )));
    }
    let mut b = Builder::new();
    let mut acc = b.leaf(k - 1);
    for j in (1..k).rev() {
        let lz = (2.0 * (j as f64).ln()).clamp(MIN_LOG_INV_Z, window / WINDOW_FLOOR);
        let r = b.leaf(j - 1);
        acc = b.node(acc, r, NodeConfig::new(lz, window, rule).build()?);
    }
    Ok(b.finish(k, Layout::Unbalanced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn cfg() -> NodeConfig {
        NodeConfig::new(2.0, 100.0, NodeRule::Plain)
    }

    fn random_rows(seed: u64, t: usize, n: usize) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, 0);
        (0..t)
            .map(|_| (0..n).map(|_| r.random_range(-1.0..=1.0)).collect())
            .collect()
    }

    #[test]
    fn single_leaf() {
        let mut t = ComparisonTree::single(0, 1).unwrap();
        let s = t.combine_tree_step(&[0.4]).unwrap();
        assert_eq!(s.weights, vec![1.0]);
        assert_eq!(s.root_payoff, 0.4);
    }

    #[test]
    fn fresh_pair_weights_base() {
        let mut t = ComparisonTree::linear(&[0, 1], 2, &cfg()).unwrap();
        let s = t.combine_tree_step(&[0.1, 0.9]).unwrap();
        assert_eq!(s.weights, vec![1.0, 0.0]);
        assert!(t.combine_tree_step(&[0.1]).is_err());
        assert!(t.combine_tree_step(&[0.1, 1.1]).is_err());
    }

    /// Independent recursive evaluation of leaf weights from the same node
    /// deviations.
    fn oracle_weights(tree: &ComparisonTree) -> Vec<f64> {
        fn rec(tree: &ComparisonTree, i: usize, mass: f64, out: &mut [f64]) {
            match &tree.slots[i] {
                Slot::Leaf { strategy } => out[*strategy] += mass,
                Slot::Node { left, right, node } => {
                    let w = super::super::node::g_bar(node.params(), node.deviation());
                    rec(tree, *left, mass * (1.0 - w), out);
                    rec(tree, *right, mass * w, out);
                }
            }
        }
        let mut out = vec![0.0; tree.n_strategies];
        rec(tree, tree.root(), 1.0, &mut out);
        out
    }

    #[test]
    fn linear_tree_matches_recursive_oracle() {
        let rows: Vec<Vec<f64>> = random_rows(1, 100, 3)
            .into_iter()
            .map(|mut r| {
                r[2] = (r[2] + 0.8).min(1.0);
                r
            })
            .collect();
        let mut t = ComparisonTree::linear(&[0, 1, 2], 3, &NodeConfig::new(1.0, 40.0, NodeRule::Plain)).unwrap();
        let mut moved = false;
        for r in &rows {
            let expect = oracle_weights(&t);
            let s = t.combine_tree_step(r).unwrap();
            for (a, b) in s.weights.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-15);
            }
            let mix: f64 = s.weights.iter().zip(r).map(|(w, p)| w * p).sum();
            assert!((mix - s.root_payoff).abs() < 1e-12);
            moved |= s.weights[2] > 0.0;
        }
        assert!(moved);
    }

    #[test]
    fn multiscale_structure() {
        let t = build_multiscale_tree(3, 1024, 1e-8).unwrap();
        assert_eq!(t.n_nodes(), 3);
        match t.layout() {
            Layout::MultiScale { levels } => assert!(levels.iter().all(|l| l.exponent == 10)),
            other => panic!("{other:?}"),
        }
        assert!(build_multiscale_tree(10, 100, 0.5).is_err());

        // Only windows 2 and 4 are candidates for T = 4.
        assert_eq!(multiscale_exponents(4, 0.05), vec![1, 2]);
        assert_eq!(multiscale_exponents(4, 1.0), Vec::<u32>::new());
        let opts = MultiScaleOptions {
            enforce_z_bound: false,
            ..Default::default()
        };
        let t = build_multiscale_tree_with(1, 4, 1.0, opts).unwrap();
        assert_eq!(t.n_nodes(), 0);
    }

    #[test]
    fn multiscale_one_right_transition_per_copy() {
        let t = build_multiscale_tree(3, 1 << 14, (3.0 * 16384f64).powi(-2)).unwrap();
        let paths = t.leaf_paths();
        let levels = match t.layout() {
            Layout::MultiScale { levels } => levels.len(),
            _ => unreachable!(),
        };
        assert_eq!(paths.len(), levels + 1);
        for p in &paths {
            assert!(p.right <= 1);
        }
        for i in 0..3 {
            assert!(paths.iter().filter(|p| p.strategy == i && p.right == 1).count() >= 1);
        }
    }

    #[test]
    fn unbalanced_structure() {
        let t = build_unbalanced_tree(1, 1000, NodeRule::Plain).unwrap();
        assert_eq!(t.n_nodes(), 0);
        let t = build_unbalanced_tree(3, 1000, NodeRule::Plain).unwrap();
        assert_eq!(t.n_nodes(), 2);
        let mut paths = t.leaf_paths();
        paths.sort_by_key(|p| p.strategy);
        assert_eq!(
            paths.iter().map(|p| (p.left, p.right)).collect::<Vec<_>>(),
            vec![(0, 1), (1, 1), (2, 0)]
        );
        let lz: Vec<f64> = t.nodes().map(|n| n.params().log_inv_z()).collect();
        // Children first: node 2 then the root.
        assert!((lz[0] - (2.0 * 2f64.ln()).max(1.0)).abs() < 1e-12);
        assert_eq!(lz[1], 1.0);
    }

    #[test]
    fn layout_json_is_deterministic() {
        let t = ComparisonTree::balanced(5, &cfg()).unwrap();
        let a = t.to_layout_json();
        assert_eq!(a, t.clone().to_layout_json());
        let recs: Vec<LayoutRecord> = serde_json::from_str(&a).unwrap();
        assert_eq!(recs.len(), 9);
        assert!(a.contains("\"Z\""));
    }

    #[test]
    fn equal_leaves_keep_weights_fixed() {
        let mut t = ComparisonTree::balanced(4, &cfg()).unwrap();
        for r in random_rows(2, 300, 1) {
            let s = t.combine_tree_step(&[r[0]; 4]).unwrap();
            assert_eq!(s.weights, vec![1.0, 0.0, 0.0, 0.0]);
        }
        assert!(t.nodes().all(|n| n.deviation() == 0.0));
    }

    #[test]
    fn leaf_weights_then_observe_equals_step() {
        let rows = random_rows(3, 200, 4);
        let mut a = ComparisonTree::balanced(4, &cfg()).unwrap();
        let mut b = a.clone();
        let mut wa = vec![0.0; 4];
        let mut wb = vec![0.0; 4];
        for r in &rows {
            a.leaf_weights(&mut wa).unwrap();
            let pa = a.observe(r).unwrap();
            let pb = b.step_into(r, &mut wb).unwrap();
            assert_eq!((pa, &wa), (pb, &wb));
        }
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution(seed in 0u64..1000, n in 1usize..7) {
            let mut t = ComparisonTree::balanced(n, &NodeConfig::new(1.0, 40.0, NodeRule::Clipped)).unwrap();
            for r in random_rows(seed, 200, n) {
                let s = t.combine_tree_step(&r).unwrap();
                prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
                prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                let mix: f64 = s.weights.iter().zip(&r).map(|(w, p)| w * p).sum();
                prop_assert!((mix - s.root_payoff).abs() <= 1e-12);
            }
        }

        #[test]
        fn shifting_all_payoffs_leaves_weights_unchanged(seed in 0u64..1000, shift in -0.5f64..0.5) {
            let rows = random_rows(seed, 150, 3);
            let mut a = ComparisonTree::linear(&[2, 0, 1], 3, &cfg()).unwrap();
            let mut b = a.clone();
            for r in rows {
                let r: Vec<f64> = r.iter().map(|v| v * 0.5).collect();
                let shifted: Vec<f64> = r.iter().map(|v| v + shift).collect();
                let sa = a.combine_tree_step(&r).unwrap();
                let sb = b.combine_tree_step(&shifted).unwrap();
                for (x, y) in sa.weights.iter().zip(&sb.weights) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}
