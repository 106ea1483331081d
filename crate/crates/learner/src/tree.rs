use serde::{Deserialize, Serialize};

use crate::binning::BinnedData;
use crate::config::Strategy;
use crate::objective::{Gradients, N_CLASSES};
use crate::split::{
    best_split_from_hist, for_each_partition, partition, rule_for, scan_order, split_gain, FeatureHist, NodeHist,
    NodeStats, SplitParams, SplitRule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        rule: SplitRule,
        missing_left: bool,
        left: usize,
        right: usize,
    },
    /// One value per output: a raw score for boosted trees, class
    /// probabilities for forest trees.
    Leaf { value: Vec<f64> },
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: Vec<f64>) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict_bins(&self, bins: &[u8]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    rule,
                    missing_left,
                    left,
                    right,
                } => i = if rule.goes_left(bins[*feature], *missing_left) { *left } else { *right },
            }
        }
    }

    /// Same walk as [`Tree::predict_bins`], reading row `r` of a binned matrix.
    pub fn predict_binned_row(&self, data: &BinnedData, r: usize) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    rule,
                    missing_left,
                    left,
                    right,
                } => i = if rule.goes_left(data.column(*feature)[r], *missing_left) { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// What a finished leaf stores.
#[derive(Debug, Clone, Copy)]
pub enum LeafValue<'a> {
    /// `-G / (H + lambda) * learning_rate` per output.
    Newton { learning_rate: f64 },
    /// Class frequencies of the leaf rows.
    ClassFrequency { labels: &'a [u8] },
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams<'a> {
    pub strategy: Strategy,
    pub max_leaves: usize,
    pub max_depth: usize,
    pub split: SplitParams,
    pub leaf: LeafValue<'a>,
}

struct Work {
    rows: Vec<u32>,
    hist: NodeHist,
    total: NodeStats,
    depth: usize,
    arena: usize,
}

enum ArenaNode {
    Pending,
    Split {
        feature: usize,
        rule: SplitRule,
        missing_left: bool,
        left: usize,
        right: usize,
    },
    Leaf(Vec<f64>),
}

struct Grower<'a> {
    data: &'a BinnedData,
    grads: &'a Gradients,
    features: &'a [usize],
    params: GrowParams<'a>,
    arena: Vec<ArenaNode>,
}

impl<'a> Grower<'a> {
    fn m(&self) -> usize {
        self.grads.n_outputs
    }

    fn work(&mut self, rows: Vec<u32>, hist: NodeHist, depth: usize) -> Work {
        let total = NodeStats::of_rows(&rows, self.grads);
        self.arena.push(ArenaNode::Pending);
        Work {
            rows,
            hist,
            total,
            depth,
            arena: self.arena.len() - 1,
        }
    }

    /// Splits `node`, building the smaller child's histogram and deriving the
    /// larger one by subtraction.
    fn split(&mut self, node: Work, feature: usize, rule: SplitRule, missing_left: bool) -> (Work, Work) {
        let (left_rows, right_rows) = partition(self.data, &node.rows, feature, &rule, missing_left);
        let m = self.m();
        let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
            let small = NodeHist::build(self.data, &left_rows, self.grads, self.features);
            let large = node.hist.subtract(&small, self.features, m);
            (small, large)
        } else {
            let small = NodeHist::build(self.data, &right_rows, self.grads, self.features);
            let large = node.hist.subtract(&small, self.features, m);
            (large, small)
        };
        let left = self.work(left_rows, left_hist, node.depth + 1);
        let right = self.work(right_rows, right_hist, node.depth + 1);
        self.arena[node.arena] = ArenaNode::Split {
            feature,
            rule,
            missing_left,
            left: left.arena,
            right: right.arena,
        };
        (left, right)
    }

    fn finish_leaf(&mut self, node: &Work) {
        let m = self.m();
        let value = match self.params.leaf {
            LeafValue::Newton { learning_rate } => (0..m)
                .map(|k| {
                    let d = node.total.h[k] + self.params.split.lambda;
                    if d > 0.0 {
                        -node.total.g[k] / d * learning_rate
                    } else {
                        0.0
                    }
                })
                .collect(),
            LeafValue::ClassFrequency { labels } => {
                let mut counts = vec![0.0; N_CLASSES];
                for &r in &node.rows {
                    counts[labels[r as usize] as usize] += 1.0;
                }
                let n = node.rows.len().max(1) as f64;
                counts.into_iter().map(|c| c / n).collect()
            }
        };
        self.arena[node.arena] = ArenaNode::Leaf(value);
    }

    fn best(&self, node: &Work) -> Option<crate::split::SplitCandidate> {
        best_split_from_hist(&node.hist, self.data, &node.total, self.features, self.m(), &self.params.split)
    }

    fn grow_leaf_wise(&mut self, root: Work) {
        let mut frontier: Vec<(Work, Option<crate::split::SplitCandidate>)> = Vec::new();
        let best = self.best(&root);
        frontier.push((root, best));
        let mut n_leaves = 1;
        while n_leaves < self.params.max_leaves {
            // Highest gain; the earliest-created leaf wins ties.
            let mut pick: Option<usize> = None;
            for (i, (_, cand)) in frontier.iter().enumerate() {
                if let Some(c) = cand {
                    if pick.is_none_or(|p| c.gain > frontier[p].1.as_ref().unwrap().gain) {
                        pick = Some(i);
                    }
                }
            }
            let Some(i) = pick else { break };
            let (node, cand) = frontier.remove(i);
            let cand = cand.unwrap();
            let (left, right) = self.split(node, cand.feature, cand.rule, cand.missing_left);
            let lb = self.best(&left);
            let rb = self.best(&right);
            frontier.push((left, lb));
            frontier.push((right, rb));
            n_leaves += 1;
        }
        for (node, _) in &frontier {
            self.finish_leaf(node);
        }
    }

    fn grow_level_wise(&mut self, root: Work) {
        let mut level = vec![root];
        for _ in 0..self.params.max_depth {
            let mut next = Vec::new();
            for node in level {
                match self.best(&node) {
                    Some(c) => {
                        let (l, r) = self.split(node, c.feature, c.rule, c.missing_left);
                        next.push(l);
                        next.push(r);
                    }
                    None => self.finish_leaf(&node),
                }
            }
            level = next;
            if level.is_empty() {
                return;
            }
        }
        for node in &level {
            self.finish_leaf(node);
        }
    }

    /// One (feature, rule, missing side) per depth, chosen by the gain summed
    /// over every node of the level. Nodes where a child would fall under
    /// `min_samples_leaf` contribute no gain but are still split.
    fn grow_symmetric(&mut self, root: Work) {
        let m = self.m();
        let params = self.params.split;
        let mut level = vec![root];
        for _ in 0..self.params.max_depth {
            let mut best: Option<(f64, usize, SplitRule, bool)> = None;
            for &f in self.features {
                let meta = self.data.meta(f);
                let mut merged = FeatureHist {
                    stats: vec![NodeStats::default(); meta.n_value_bins + 1],
                };
                for node in &level {
                    for (acc, s) in merged.stats.iter_mut().zip(&node.hist.features[f].stats) {
                        for k in 0..m {
                            acc.g[k] += s.g[k];
                            acc.h[k] += s.h[k];
                        }
                        acc.count += s.count;
                    }
                }
                let order = scan_order(&merged, meta, m, params.lambda);
                let mut summed = vec![0.0; order.len() * 2];
                for node in &level {
                    for_each_partition(&node.hist.features[f], &order, &node.total, m, |t, missing_left, l, r| {
                        if l.count >= params.min_samples_leaf && r.count >= params.min_samples_leaf {
                            let gain = split_gain(l, r, &node.total, m, params.lambda);
                            if gain > 0.0 {
                                summed[t * 2 + usize::from(!missing_left)] += gain;
                            }
                        }
                    });
                }
                for (i, &gain) in summed.iter().enumerate() {
                    if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.0) {
                        best = Some((gain, f, rule_for(meta, &order, i / 2), i % 2 == 0));
                    }
                }
            }
            let Some((_, feature, rule, missing_left)) = best else { break };
            let mut next = Vec::with_capacity(level.len() * 2);
            for node in level {
                let (l, r) = self.split(node, feature, rule.clone(), missing_left);
                next.push(l);
                next.push(r);
            }
            level = next;
        }
        for node in &level {
            self.finish_leaf(node);
        }
    }

    fn into_tree(self) -> Tree {
        let mut nodes = Vec::with_capacity(self.arena.len());
        fn emit(arena: &[ArenaNode], i: usize, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            match &arena[i] {
                ArenaNode::Leaf(value) => out.push(Node::Leaf { value: value.clone() }),
                ArenaNode::Split {
                    feature,
                    rule,
                    missing_left,
                    left,
                    right,
                } => {
                    out.push(Node::Leaf { value: Vec::new() });
                    let l = emit(arena, *left, out);
                    let r = emit(arena, *right, out);
                    out[at] = Node::Split {
                        feature: *feature,
                        rule: rule.clone(),
                        missing_left: *missing_left,
                        left: l,
                        right: r,
                    };
                }
                ArenaNode::Pending => unreachable!("every node is resolved before the tree is emitted"),
            }
            at
        }
        emit(&self.arena, 0, &mut nodes);
        Tree { nodes }
    }
}

/// Grows one tree over `rows` (duplicates allowed, e.g. a bootstrap sample)
/// considering only `features` (ascending).
pub fn grow_tree(data: &BinnedData, rows: Vec<u32>, grads: &Gradients, features: &[usize], params: GrowParams<'_>) -> Tree {
    let mut grower = Grower {
        data,
        grads,
        features,
        params,
        arena: Vec::new(),
    };
    let hist = NodeHist::build(data, &rows, grads, features);
    let root = grower.work(rows, hist, 0);
    match params.strategy {
        Strategy::LeafWise => grower.grow_leaf_wise(root),
        Strategy::LevelWise | Strategy::Forest => grower.grow_level_wise(root),
        Strategy::Symmetric => grower.grow_symmetric(root),
    }
    grower.into_tree()
}
