//! Binary regression trees with vector-valued leaves, the tree-generating
//! prior, and birth/death proposals.
//!
//! Split rules send `x` left iff `x[var] < cut`; ties go right. Cut values
//! come from a fixed per-dimension [`CutGrid`], and a node may only split on
//! cuts strictly inside the interval its ancestors leave open.

use std::fmt::Write as _;

use rand::Rng;

use crate::dataset::Point;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Depth-dependent split prior `p(split) = α (1 + depth)^{-β}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreePriorConfig {
    /// α
    pub split_base: f64,
    /// β
    pub split_power: f64,
    pub cutpoints_per_dim: usize,
}

impl Default for TreePriorConfig {
    fn default() -> Self {
        TreePriorConfig {
            split_base: 0.95,
            split_power: 2.0,
            cutpoints_per_dim: 100,
        }
    }
}

impl TreePriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_base > 0.0 && self.split_base < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split_base must be in (0, 1), got {}",
                self.split_base
            )));
        }
        if !(self.split_power >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split_power must be >= 0, got {}",
                self.split_power
            )));
        }
        if self.cutpoints_per_dim == 0 {
            return Err(Error::InvalidArgument(
                "need at least one cutpoint per dimension".into(),
            ));
        }
        Ok(())
    }
}

pub fn split_probability(depth: usize, cfg: &TreePriorConfig) -> f64 {
    cfg.split_base * (1.0 + depth as f64).powf(-cfg.split_power)
}

/// Candidate cut values per input dimension, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CutGrid {
    cuts: Vec<Vec<f64>>,
}

impl CutGrid {
    pub fn new(cuts: Vec<Vec<f64>>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::InvalidArgument(
                "cut grid needs at least one dimension".into(),
            ));
        }
        for (v, c) in cuts.iter().enumerate() {
            if c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument(format!(
                    "cuts for dimension {v} must be strictly increasing"
                )));
            }
        }
        Ok(CutGrid { cuts })
    }

    /// `per_dim` equally spaced interior points over the observed range of each dimension.
    pub fn from_inputs(inputs: &[Point], per_dim: usize) -> Result<Self> {
        let d = inputs
            .first()
            .ok_or_else(|| Error::InvalidArgument("no inputs to build cutpoints from".into()))?
            .len();
        let cuts = (0..d)
            .map(|v| {
                let (lo, hi) = inputs
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x[v]), hi.max(x[v]))
                    });
                if hi > lo {
                    let step = (hi - lo) / (per_dim + 1) as f64;
                    (1..=per_dim).map(|i| lo + step * i as f64).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        CutGrid::new(cuts)
    }

    pub fn dims(&self) -> usize {
        self.cuts.len()
    }

    pub fn len(&self, var: usize) -> usize {
        self.cuts[var].len()
    }

    pub fn cut(&self, var: usize, index: usize) -> f64 {
        self.cuts[var][index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRule {
    pub var: usize,
    /// Position of `cut` in the [`CutGrid`] for `var`.
    pub index: usize,
    pub cut: f64,
}

impl SplitRule {
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] < self.cut
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf(Vec<f64>),
    Internal {
        rule: SplitRule,
        left: NodeId,
        right: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub kind: NodeKind,
}

/// Arena-backed binary tree. Node 0 is always the root.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Option<Node>>,
    free: Vec<NodeId>,
}

impl Tree {
    pub fn root(value: Vec<f64>) -> Self {
        Tree {
            nodes: vec![Some(Node {
                parent: None,
                depth: 0,
                kind: NodeKind::Leaf(value),
            })],
            free: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes[id].as_ref().expect("live node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id].as_mut().expect("live node id")
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id).kind, NodeKind::Leaf(_))
    }

    pub fn leaf_value(&self, id: NodeId) -> &[f64] {
        match &self.node(id).kind {
            NodeKind::Leaf(v) => v,
            NodeKind::Internal { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, id: NodeId, value: Vec<f64>) {
        match &mut self.node_mut(id).kind {
            NodeKind::Leaf(v) => *v = value,
            NodeKind::Internal { .. } => panic!("node {id} is not a leaf"),
        }
    }

    /// Node ids in pre-order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let NodeKind::Internal { left, right, .. } = self.node(id).kind {
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.is_leaf(id))
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| !self.is_leaf(id))
            .collect()
    }

    /// Internal nodes whose children are both leaves (candidates for death).
    pub fn prunable_nodes(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| match self.node(id).kind {
                NodeKind::Internal { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                NodeKind::Leaf(_) => false,
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn max_depth(&self) -> usize {
        self.preorder()
            .into_iter()
            .map(|id| self.node(id).depth)
            .max()
            .unwrap_or(0)
    }

    pub fn leaf_dim(&self) -> usize {
        self.leaf_value(self.leaves()[0]).len()
    }

    /// The unique leaf containing `x`.
    pub fn assign_leaf(&self, x: &[f64]) -> NodeId {
        let mut id = 0;
        loop {
            match &self.node(id).kind {
                NodeKind::Leaf(_) => return id,
                NodeKind::Internal { rule, left, right } => {
                    id = if rule.goes_left(x) { *left } else { *right };
                }
            }
        }
    }

    /// Leaf vector of the leaf containing `x`.
    pub fn evaluate(&self, x: &[f64]) -> &[f64] {
        self.leaf_value(self.assign_leaf(x))
    }

    /// Half-open range `[lo, hi)` of cut indices on `var` still available at `id`.
    pub fn cut_range(&self, id: NodeId, var: usize, grid: &CutGrid) -> (usize, usize) {
        let (mut lo, mut hi) = (0usize, grid.len(var));
        let mut child = id;
        while let Some(parent) = self.node(child).parent {
            if let NodeKind::Internal { rule, left, .. } = self.node(parent).kind {
                if rule.var == var {
                    if left == child {
                        hi = hi.min(rule.index);
                    } else {
                        lo = lo.max(rule.index + 1);
                    }
                }
            }
            child = parent;
        }
        (lo, hi.max(lo))
    }

    /// `(var, number of available cuts)` for each variable that can still split at `id`.
    pub fn available_splits(&self, id: NodeId, grid: &CutGrid) -> Vec<(usize, usize)> {
        (0..grid.dims())
            .filter_map(|v| {
                let (lo, hi) = self.cut_range(id, v, grid);
                (hi > lo).then_some((v, hi - lo))
            })
            .collect()
    }

    /// Turns leaf `id` into an internal node with two leaves that copy its value.
    pub fn grow(&mut self, id: NodeId, rule: SplitRule) -> (NodeId, NodeId) {
        let node = self.node(id);
        let depth = node.depth;
        let value = match &node.kind {
            NodeKind::Leaf(v) => v.clone(),
            NodeKind::Internal { .. } => panic!("cannot grow internal node {id}"),
        };
        let make = |v: Vec<f64>| Node {
            parent: Some(id),
            depth: depth + 1,
            kind: NodeKind::Leaf(v),
        };
        let left = self.alloc(make(value.clone()));
        let right = self.alloc(make(value));
        self.node_mut(id).kind = NodeKind::Internal { rule, left, right };
        (left, right)
    }

    /// Collapses internal node `id`, whose children must both be leaves, into a leaf.
    pub fn prune(&mut self, id: NodeId, value: Vec<f64>) {
        let (left, right) = match self.node(id).kind {
            NodeKind::Internal { left, right, .. } => (left, right),
            NodeKind::Leaf(_) => panic!("cannot prune leaf {id}"),
        };
        assert!(
            self.is_leaf(left) && self.is_leaf(right),
            "node {id} has non-leaf children"
        );
        self.nodes[left] = None;
        self.nodes[right] = None;
        self.free.push(right);
        self.free.push(left);
        self.node_mut(id).kind = NodeKind::Leaf(value);
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = Some(node);
            id
        } else {
            self.nodes.push(Some(node));
            self.nodes.len() - 1
        }
    }

    /// Pre-order text encoding: `I <var> <index> <cut>` for internal nodes and
    /// `L <v1,...,vK>` for leaves.
    pub fn encode(&self) -> String {
        let mut out = String::new();
        for id in self.preorder() {
            if !out.is_empty() {
                out.push(' ');
            }
            match &self.node(id).kind {
                NodeKind::Internal { rule, .. } => {
                    write!(out, "I {} {} {:e}", rule.var, rule.index, rule.cut).unwrap();
                }
                NodeKind::Leaf(v) => {
                    let cells: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
                    write!(out, "L {}", cells.join(",")).unwrap();
                }
            }
        }
        out
    }

    pub fn decode(text: &str) -> Result<Tree> {
        let mut tokens = text.split_whitespace();
        let bad = |msg: &str| Error::InvalidArgument(format!("bad tree encoding: {msg}"));

        fn read_node<'a>(
            tokens: &mut impl Iterator<Item = &'a str>,
            tree: &mut Option<Tree>,
            parent: Option<(NodeId, bool)>,
        ) -> Result<()> {
            let bad = |msg: &str| Error::InvalidArgument(format!("bad tree encoding: {msg}"));
            let tag = tokens.next().ok_or_else(|| bad("truncated"))?;
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| bad("truncated"))?
                    .parse::<f64>()
                    .map_err(|_| bad("non-numeric value"))
            };
            match tag {
                "L" => {
                    let vals = tokens
                        .next()
                        .ok_or_else(|| bad("truncated leaf"))?
                        .split(',')
                        .map(|s| s.parse::<f64>().map_err(|_| bad("non-numeric leaf value")))
                        .collect::<Result<Vec<f64>>>()?;
                    match parent {
                        None => *tree = Some(Tree::root(vals)),
                        Some((pid, is_left)) => {
                            let t = tree.as_mut().unwrap();
                            let child = child_of(t, pid, is_left);
                            t.set_leaf_value(child, vals);
                        }
                    }
                    Ok(())
                }
                "I" => {
                    let var = parse(tokens.next())? as usize;
                    let index = parse(tokens.next())? as usize;
                    let cut = parse(tokens.next())?;
                    let rule = SplitRule { var, index, cut };
                    let id = match parent {
                        None => {
                            *tree = Some(Tree::root(Vec::new()));
                            0
                        }
                        Some((pid, is_left)) => child_of(tree.as_ref().unwrap(), pid, is_left),
                    };
                    tree.as_mut().unwrap().grow(id, rule);
                    read_node(tokens, tree, Some((id, true)))?;
                    read_node(tokens, tree, Some((id, false)))
                }
                other => Err(bad(&format!("unknown node tag {other:?}"))),
            }
        }

        fn child_of(t: &Tree, pid: NodeId, is_left: bool) -> NodeId {
            match t.node(pid).kind {
                NodeKind::Internal { left, right, .. } => {
                    if is_left {
                        left
                    } else {
                        right
                    }
                }
                NodeKind::Leaf(_) => unreachable!(),
            }
        }

        let mut tree = None;
        read_node(&mut tokens, &mut tree, None)?;
        if tokens.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        let tree = tree.ok_or_else(|| bad("empty"))?;
        let k = tree.leaf_dim();
        if tree.leaves().iter().any(|&l| tree.leaf_value(l).len() != k) {
            return Err(bad("leaf vectors differ in length"));
        }
        Ok(tree)
    }

    /// Same split structure (leaf values ignored).
    pub fn same_structure(&self, other: &Tree) -> bool {
        let a = self.preorder();
        let b = other.preorder();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(&i, &j)| match (&self.node(i).kind, &other.node(j).kind) {
                    (NodeKind::Leaf(_), NodeKind::Leaf(_)) => true,
                    (NodeKind::Internal { rule: r1, .. }, NodeKind::Internal { rule: r2, .. }) => {
                        r1.var == r2.var && r1.index == r2.index
                    }
                    _ => false,
                })
    }

    /// Structure-only encoding, useful as a hash key.
    pub fn structure_key(&self) -> String {
        self.preorder()
            .into_iter()
            .map(|id| match &self.node(id).kind {
                NodeKind::Leaf(_) => "L".to_string(),
                NodeKind::Internal { rule, .. } => format!("{}:{}", rule.var, rule.index),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Log prior of the tree's structure under the tree-generating process.
///
/// Each internal node contributes `log p(split)` plus the log probability of
/// its rule (uniform variable among those that can split, then uniform cut);
/// each leaf that could still split contributes `log(1 - p(split))`.
pub fn log_tree_prior(tree: &Tree, cfg: &TreePriorConfig, grid: &CutGrid) -> f64 {
    let mut lp = 0.0;
    for id in tree.preorder() {
        let node = tree.node(id);
        let avail = tree.available_splits(id, grid);
        let p = split_probability(node.depth, cfg);
        match &node.kind {
            NodeKind::Leaf(_) => {
                if !avail.is_empty() {
                    lp += (1.0 - p).ln();
                }
            }
            NodeKind::Internal { rule, .. } => {
                let n_cuts = avail
                    .iter()
                    .find(|(v, _)| *v == rule.var)
                    .map(|(_, c)| *c)
                    .unwrap_or(0);
                if n_cuts == 0 {
                    return f64::NEG_INFINITY;
                }
                lp += p.ln() - (avail.len() as f64).ln() - (n_cuts as f64).ln();
            }
        }
    }
    lp
}

/// Draws a tree from the tree-generating prior with leaf vectors set to `leaf`.
pub fn sample_prior_tree<R: Rng + ?Sized>(
    cfg: &TreePriorConfig,
    grid: &CutGrid,
    leaf: &[f64],
    rng: &mut R,
) -> Tree {
    let mut tree = Tree::root(leaf.to_vec());
    let mut pending = vec![0];
    while let Some(id) = pending.pop() {
        let avail = tree.available_splits(id, grid);
        if avail.is_empty() || rng.random::<f64>() >= split_probability(tree.node(id).depth, cfg) {
            continue;
        }
        let (var, _) = avail[rng.random_range(0..avail.len())];
        let (lo, hi) = tree.cut_range(id, var, grid);
        let index = rng.random_range(lo..hi);
        let (l, r) = tree.grow(
            id,
            SplitRule {
                var,
                index,
                cut: grid.cut(var, index),
            },
        );
        pending.push(r);
        pending.push(l);
    }
    tree
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Birth,
    Death,
}

/// A proposed structural change with its Metropolis–Hastings bookkeeping.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: Tree,
    /// Leaf grown (birth) or node collapsed (death), as an id valid in both trees.
    pub node: NodeId,
    pub log_forward: f64,
    pub log_reverse: f64,
    pub log_prior_ratio: f64,
}

#[derive(Debug, Clone)]
pub enum ProposalOutcome {
    Valid(Proposal),
    Invalid(&'static str),
}

impl ProposalOutcome {
    pub fn valid(self) -> Option<Proposal> {
        match self {
            ProposalOutcome::Valid(p) => Some(p),
            ProposalOutcome::Invalid(_) => None,
        }
    }
}

/// Probability of choosing a birth move from `tree`; death gets the rest.
fn birth_probability(n_growable: usize, n_prunable: usize) -> f64 {
    match (n_growable > 0, n_prunable > 0) {
        (true, true) => 0.5,
        (true, false) => 1.0,
        (false, _) => 0.0,
    }
}

fn growable_leaves(tree: &Tree, grid: &CutGrid) -> Vec<NodeId> {
    tree.leaves()
        .into_iter()
        .filter(|&l| !tree.available_splits(l, grid).is_empty())
        .collect()
}

/// Grows a uniformly chosen leaf with a uniformly chosen rule.
///
/// `inputs[i]` belongs to leaf `assignment[i]`; the proposal is invalid if
/// either child would receive fewer than `min_leaf_n` of those points.
pub fn propose_birth<R: Rng + ?Sized>(
    tree: &Tree,
    grid: &CutGrid,
    cfg: &TreePriorConfig,
    inputs: &[Point],
    assignment: &[NodeId],
    min_leaf_n: usize,
    rng: &mut R,
) -> ProposalOutcome {
    let growable = growable_leaves(tree, grid);
    if growable.is_empty() {
        return ProposalOutcome::Invalid("no leaf can be split");
    }
    let n_prunable = tree.prunable_nodes().len();
    let leaf = growable[rng.random_range(0..growable.len())];
    let avail = tree.available_splits(leaf, grid);
    let (var, n_cuts) = avail[rng.random_range(0..avail.len())];
    let (lo, hi) = tree.cut_range(leaf, var, grid);
    let index = rng.random_range(lo..hi);
    let rule = SplitRule {
        var,
        index,
        cut: grid.cut(var, index),
    };

    let (mut n_left, mut n_right) = (0usize, 0usize);
    for (x, &a) in inputs.iter().zip(assignment) {
        if a == leaf {
            if rule.goes_left(x) {
                n_left += 1;
            } else {
                n_right += 1;
            }
        }
    }
    if n_left < min_leaf_n || n_right < min_leaf_n {
        return ProposalOutcome::Invalid("child leaf below minimum size");
    }

    let mut proposed = tree.clone();
    proposed.grow(leaf, rule);

    let log_forward = birth_probability(growable.len(), n_prunable).ln()
        - (growable.len() as f64).ln()
        - (avail.len() as f64).ln()
        - (n_cuts as f64).ln();
    let growable_after = growable_leaves(&proposed, grid).len();
    let prunable_after = proposed.prunable_nodes().len();
    let log_reverse = (1.0 - birth_probability(growable_after, prunable_after)).ln()
        - (prunable_after as f64).ln();
    let log_prior_ratio = log_tree_prior(&proposed, cfg, grid) - log_tree_prior(tree, cfg, grid);

    ProposalOutcome::Valid(Proposal {
        kind: MoveKind::Birth,
        tree: proposed,
        node: leaf,
        log_forward,
        log_reverse,
        log_prior_ratio,
    })
}

/// Collapses a uniformly chosen node whose children are both leaves.
pub fn propose_death<R: Rng + ?Sized>(
    tree: &Tree,
    grid: &CutGrid,
    cfg: &TreePriorConfig,
    rng: &mut R,
) -> ProposalOutcome {
    let prunable = tree.prunable_nodes();
    if prunable.is_empty() {
        return ProposalOutcome::Invalid("tree has no prunable node");
    }
    let growable = growable_leaves(tree, grid);
    let node = prunable[rng.random_range(0..prunable.len())];
    let left = match tree.node(node).kind {
        NodeKind::Internal { left, .. } => left,
        NodeKind::Leaf(_) => unreachable!(),
    };
    let mut proposed = tree.clone();
    proposed.prune(node, tree.leaf_value(left).to_vec());

    let log_forward = (1.0 - birth_probability(growable.len(), prunable.len())).ln()
        - (prunable.len() as f64).ln();
    let growable_after = growable_leaves(&proposed, grid);
    let prunable_after = proposed.prunable_nodes().len();
    let avail = proposed.available_splits(node, grid);
    let rule = match tree.node(node).kind {
        NodeKind::Internal { rule, .. } => rule,
        NodeKind::Leaf(_) => unreachable!(),
    };
    let n_cuts = avail
        .iter()
        .find(|(v, _)| *v == rule.var)
        .map(|(_, c)| *c)
        .unwrap_or(1);
    let log_reverse = birth_probability(growable_after.len(), prunable_after).ln()
        - (growable_after.len() as f64).ln()
        - (avail.len() as f64).ln()
        - (n_cuts as f64).ln();
    let log_prior_ratio = log_tree_prior(&proposed, cfg, grid) - log_tree_prior(tree, cfg, grid);

    ProposalOutcome::Valid(Proposal {
        kind: MoveKind::Death,
        tree: proposed,
        node,
        log_forward,
        log_reverse,
        log_prior_ratio,
    })
}

/// Birth or death, chosen with the move mix used inside the acceptance ratio.
pub fn propose<R: Rng + ?Sized>(
    tree: &Tree,
    grid: &CutGrid,
    cfg: &TreePriorConfig,
    inputs: &[Point],
    assignment: &[NodeId],
    min_leaf_n: usize,
    rng: &mut R,
) -> ProposalOutcome {
    let p_birth = birth_probability(
        growable_leaves(tree, grid).len(),
        tree.prunable_nodes().len(),
    );
    if p_birth == 0.0 && tree.prunable_nodes().is_empty() {
        return ProposalOutcome::Invalid("no move available");
    }
    if rng.random::<f64>() < p_birth {
        propose_birth(tree, grid, cfg, inputs, assignment, min_leaf_n, rng)
    } else {
        propose_death(tree, grid, cfg, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_1d(n: usize) -> CutGrid {
        CutGrid::new(vec![(1..=n).map(|i| i as f64 / (n + 1) as f64).collect()]).unwrap()
    }

    #[test]
    fn split_probability_cases() {
        let cfg = TreePriorConfig::default();
        assert_eq!(split_probability(0, &cfg), 0.95);
        assert!((split_probability(1, &cfg) - 0.2375).abs() < 1e-15);
        let flat = TreePriorConfig {
            split_power: 0.0,
            ..cfg
        };
        assert_eq!(split_probability(5, &flat), 0.95);
    }

    #[test]
    fn root_prior() {
        let cfg = TreePriorConfig::default();
        let t = Tree::root(vec![0.0]);
        assert!((log_tree_prior(&t, &cfg, &grid_1d(100)) - 0.05f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_split_prior() {
        let cfg = TreePriorConfig::default();
        let grid = grid_1d(100);
        let mut t = Tree::root(vec![0.0]);
        t.grow(
            0,
            SplitRule {
                var: 0,
                index: 40,
                cut: grid.cut(0, 40),
            },
        );
        let expect = 0.95f64.ln() + 2.0 * (1.0 - 0.95 / 4.0f64).ln() + (1.0 / 100.0f64).ln();
        assert!((log_tree_prior(&t, &cfg, &grid) - expect).abs() < 1e-12);
    }

    #[test]
    fn strict_inequality_goes_right() {
        let mut t = Tree::root(vec![0.0]);
        let (l, r) = t.grow(
            0,
            SplitRule {
                var: 0,
                index: 0,
                cut: 0.5,
            },
        );
        assert_eq!(t.assign_leaf(&[0.5]), r);
        assert_eq!(t.assign_leaf(&[0.4999]), l);
        assert_eq!(Tree::root(vec![1.0]).assign_leaf(&[123.0]), 0);
    }

    #[test]
    fn depth_two_trace() {
        // x1 < 0.5 ? (x2 < 0.3 ? A : B) : C
        let mut t = Tree::root(vec![0.0]);
        let (l, c) = t.grow(
            0,
            SplitRule {
                var: 0,
                index: 0,
                cut: 0.5,
            },
        );
        let (a, b) = t.grow(
            l,
            SplitRule {
                var: 1,
                index: 0,
                cut: 0.3,
            },
        );
        assert_eq!(t.assign_leaf(&[0.2, 0.1]), a);
        assert_eq!(t.assign_leaf(&[0.2, 0.3]), b);
        assert_eq!(t.assign_leaf(&[0.7, 0.1]), c);
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.max_depth(), 2);
    }

    #[test]
    fn cut_ranges_respect_ancestors() {
        let grid = grid_1d(10);
        let mut t = Tree::root(vec![0.0]);
        let (l, r) = t.grow(
            0,
            SplitRule {
                var: 0,
                index: 4,
                cut: grid.cut(0, 4),
            },
        );
        assert_eq!(t.cut_range(l, 0, &grid), (0, 4));
        assert_eq!(t.cut_range(r, 0, &grid), (5, 10));
        let (rl, _) = t.grow(
            r,
            SplitRule {
                var: 0,
                index: 5,
                cut: grid.cut(0, 5),
            },
        );
        assert_eq!(t.cut_range(rl, 0, &grid), (5, 5));
        assert!(t.available_splits(rl, &grid).is_empty());
    }

    #[test]
    fn birth_from_root_probability() {
        let grid = grid_1d(100);
        let cfg = TreePriorConfig::default();
        let t = Tree::root(vec![0.0]);
        let inputs: Vec<Point> = (0..50).map(|i| vec![i as f64 / 49.0]).collect();
        let assign = vec![0; inputs.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = propose_birth(&t, &grid, &cfg, &inputs, &assign, 1, &mut rng)
            .valid()
            .unwrap();
        assert!((p.log_forward - (1.0f64 / 100.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn birth_death_bookkeeping_is_paired() {
        let grid = grid_1d(6);
        let cfg = TreePriorConfig::default();
        let inputs: Vec<Point> = (0..30).map(|i| vec![i as f64 / 29.0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = Tree::root(vec![0.0]);
        for _ in 0..200 {
            let assign: Vec<NodeId> = inputs.iter().map(|x| t.assign_leaf(x)).collect();
            let Some(b) = propose_birth(&t, &grid, &cfg, &inputs, &assign, 1, &mut rng).valid()
            else {
                continue;
            };
            // Find the death that undoes this birth.
            let mut found = false;
            for s in 0..500u64 {
                let mut r2 = ChaCha8Rng::seed_from_u64(s);
                let d = propose_death(&b.tree, &grid, &cfg, &mut r2)
                    .valid()
                    .unwrap();
                if d.node == b.node {
                    assert!(d.tree.same_structure(&t));
                    assert!((d.log_forward - b.log_reverse).abs() < 1e-12);
                    assert!((d.log_reverse - b.log_forward).abs() < 1e-12);
                    assert!((d.log_prior_ratio + b.log_prior_ratio).abs() < 1e-12);
                    found = true;
                    break;
                }
            }
            assert!(found);
            if b.tree.n_leaves() < 6 {
                t = b.tree;
            }
        }
    }

    #[test]
    fn death_of_single_split_gives_root() {
        let grid = grid_1d(10);
        let cfg = TreePriorConfig::default();
        let mut t = Tree::root(vec![1.0, 2.0]);
        t.grow(
            0,
            SplitRule {
                var: 0,
                index: 3,
                cut: grid.cut(0, 3),
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = propose_death(&t, &grid, &cfg, &mut rng).valid().unwrap();
        assert!(d.tree.same_structure(&Tree::root(vec![0.0, 0.0])));
        assert!(matches!(
            propose_death(&Tree::root(vec![0.0]), &grid, &cfg, &mut rng),
            ProposalOutcome::Invalid(_)
        ));
    }

    #[test]
    fn birth_respects_min_leaf_size() {
        let grid = grid_1d(100);
        let cfg = TreePriorConfig::default();
        let inputs = vec![vec![0.2], vec![0.8]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tree::root(vec![0.0]);
        for _ in 0..500 {
            if let ProposalOutcome::Valid(p) =
                propose_birth(&t, &grid, &cfg, &inputs, &[0, 0], 1, &mut rng)
            {
                let l0 = p.tree.assign_leaf(&inputs[0]);
                let l1 = p.tree.assign_leaf(&inputs[1]);
                assert_ne!(l0, l1);
            }
        }
    }

    #[test]
    fn encoding_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = CutGrid::new(vec![vec![0.1, 0.2, 0.3, 0.4], vec![-1.0, 0.0, 1.0]]).unwrap();
        let cfg = TreePriorConfig {
            split_power: 0.5,
            ..TreePriorConfig::default()
        };
        for _ in 0..50 {
            let mut t = sample_prior_tree(&cfg, &grid, &[0.0, 0.0], &mut rng);
            for l in t.leaves() {
                t.set_leaf_value(l, vec![rng.random::<f64>() - 0.5, 1.0 / 3.0]);
            }
            let text = t.encode();
            let back = Tree::decode(&text).unwrap();
            assert_eq!(back.encode(), text);
            assert!(back.same_structure(&t));
        }
        assert!(Tree::decode("I 0 1").is_err());
        assert!(Tree::decode("L 1,2 L 3,4").is_err());
    }
}
