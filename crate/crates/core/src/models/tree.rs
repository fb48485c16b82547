//! Greedy best-first decision tree growth on the Gini criterion.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_label, gini_impurity, Prediction, TreeParams};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::textfeat::SparseVector;

/// A split gain this small is treated as zero.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<usize>,
        label: usize,
        probabilities: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub root: TreeNode,
    pub params: TreeParams,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
}

struct ChosenSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left_samples: Vec<usize>,
    right_samples: Vec<usize>,
}

struct BuildNode {
    samples: Vec<usize>,
    depth: usize,
    class_counts: Vec<usize>,
    candidate: Option<ChosenSplit>,
    children: Option<(usize, usize)>,
}

/// Heap entry ordered by gain, ties broken toward the earlier-created node.
struct FrontierEntry {
    gain: f64,
    node: usize,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.gain == other.gain && self.node == other.node
    }
}
impl Eq for FrontierEntry {}
impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for FrontierEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .partial_cmp(&other.gain)
            .expect("gains are finite")
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn class_counts_of(train: &LabeledDataset, samples: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; train.n_classes()];
    for &i in samples {
        counts[train.items[i].label] += 1;
    }
    counts
}

/// Candidate features for one node: a seeded subset of `max_features`
/// columns, or every column when no cap applies (no RNG consumed).
fn feature_pool(n_features: usize, params: &TreeParams, node_seed: u64) -> Vec<usize> {
    match params.max_features {
        Some(m) if m < n_features => {
            let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
            let mut picked = rand::seq::index::sample(&mut rng, n_features, m).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n_features).collect(),
    }
}

/// Best (feature, threshold) for one node, or `None` when the node must
/// stay a leaf. Ties break toward the lowest feature index, then the lowest
/// threshold; both fall out of scanning features and thresholds in
/// ascending order with a strict improvement test.
fn evaluate_split(
    train: &LabeledDataset,
    node: &BuildNode,
    params: &TreeParams,
    node_seed: u64,
) -> Option<ChosenSplit> {
    let n = node.samples.len();
    if n < params.min_samples_split {
        return None;
    }
    if let Some(max_depth) = params.max_depth {
        if node.depth >= max_depth {
            return None;
        }
    }
    let parent_gini = gini_impurity(&node.class_counts).ok()?;
    if parent_gini == 0.0 {
        return None;
    }

    let n_classes = train.n_classes();
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);

    for feature in feature_pool(train.n_features, params, node_seed) {
        pairs.clear();
        pairs.extend(
            node.samples
                .iter()
                .map(|&i| (train.items[i].features.get(feature), train.items[i].label)),
        );
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("feature values are finite"));
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }

        let mut left_counts = vec![0usize; n_classes];
        let mut left_sq = 0.0f64; // running Σ c² over left counts
        let mut right_counts = node.class_counts.clone();
        let mut right_sq: f64 = right_counts.iter().map(|&c| (c * c) as f64).sum();

        for idx in 0..n - 1 {
            let (value, label) = pairs[idx];
            // Move one sample left, maintaining Σ c² incrementally.
            left_sq += (2 * left_counts[label] + 1) as f64;
            left_counts[label] += 1;
            right_sq -= (2 * right_counts[label] - 1) as f64;
            right_counts[label] -= 1;

            let next_value = pairs[idx + 1].0;
            if value == next_value {
                continue;
            }
            let nl = (idx + 1) as f64;
            let nr = (n - idx - 1) as f64;
            let gini_l = 1.0 - left_sq / (nl * nl);
            let gini_r = 1.0 - right_sq / (nr * nr);
            let weighted = (nl * gini_l + nr * gini_r) / n as f64;
            let gain = parent_gini - weighted;
            if gain > GAIN_EPS && best.map_or(true, |(bg, _, _)| gain > bg) {
                let threshold = value + (next_value - value) / 2.0;
                best = Some((gain, feature, threshold));
            }
        }
    }

    let (gain, feature, threshold) = best?;
    let mut left_samples = Vec::new();
    let mut right_samples = Vec::new();
    for &i in &node.samples {
        if train.items[i].features.get(feature) <= threshold {
            left_samples.push(i);
        } else {
            right_samples.push(i);
        }
    }
    Some(ChosenSplit { feature, threshold, gain, left_samples, right_samples })
}

fn finish_node(nodes: &[BuildNode], idx: usize) -> TreeNode {
    let node = &nodes[idx];
    match node.children {
        Some((left, right)) => {
            let split = node.candidate.as_ref().expect("split applied");
            TreeNode::Internal {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(finish_node(nodes, left)),
                right: Box::new(finish_node(nodes, right)),
            }
        }
        None => {
            let total: usize = node.class_counts.iter().sum();
            let probabilities: Vec<f64> = node
                .class_counts
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect();
            TreeNode::Leaf {
                class_counts: node.class_counts.clone(),
                label: argmax_label(&probabilities),
                probabilities,
            }
        }
    }
}

/// Fit a tree by expanding, at every step, the frontier node with the
/// largest weighted Gini decrease. Deterministic given `seed`.
pub fn fit_tree(train: &LabeledDataset, params: &TreeParams, seed: u64) -> Result<DecisionTreeModel> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit a tree on an empty training set"));
    }
    if train.n_features == 0 {
        return Err(Error::invalid("cannot fit a tree with zero features"));
    }

    let all: Vec<usize> = (0..train.len()).collect();
    let root = BuildNode {
        class_counts: class_counts_of(train, &all),
        samples: all,
        depth: 0,
        candidate: None,
        children: None,
    };
    let mut nodes = vec![root];
    let mut heap = BinaryHeap::new();
    if let Some(split) = evaluate_split(train, &nodes[0], params, derive_seed(seed, 0)) {
        heap.push(FrontierEntry { gain: split.gain, node: 0 });
        nodes[0].candidate = Some(split);
    }

    let mut n_leaves = 1usize;
    while let Some(entry) = heap.pop() {
        if let Some(budget) = params.max_leaf_nodes {
            if n_leaves >= budget {
                break;
            }
        }
        let (left_samples, right_samples, depth) = {
            let node = &mut nodes[entry.node];
            let split = node.candidate.as_mut().expect("frontier node has a split");
            (
                std::mem::take(&mut split.left_samples),
                std::mem::take(&mut split.right_samples),
                node.depth,
            )
        };
        let left_idx = nodes.len();
        let right_idx = left_idx + 1;
        for samples in [left_samples, right_samples] {
            let child = BuildNode {
                class_counts: class_counts_of(train, &samples),
                samples,
                depth: depth + 1,
                candidate: None,
                children: None,
            };
            nodes.push(child);
        }
        nodes[entry.node].children = Some((left_idx, right_idx));
        nodes[entry.node].samples = Vec::new();
        n_leaves += 1;

        for child_idx in [left_idx, right_idx] {
            if let Some(split) =
                evaluate_split(train, &nodes[child_idx], params, derive_seed(seed, child_idx as u64))
            {
                heap.push(FrontierEntry { gain: split.gain, node: child_idx });
                nodes[child_idx].candidate = Some(split);
            }
        }
    }

    Ok(DecisionTreeModel {
        root: finish_node(&nodes, 0),
        params: params.clone(),
        n_features: train.n_features,
        n_classes: train.n_classes(),
        seed,
    })
}

impl DecisionTreeModel {
    pub fn predict(&self, x: &SparseVector) -> Result<Prediction> {
        if x.dim() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.dim() });
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if x.get(*feature) <= *threshold { left } else { right };
                }
                TreeNode::Leaf { label, probabilities, .. } => {
                    return Ok(Prediction { label: *label, probabilities: probabilities.clone() });
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth_of(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + depth_of(left).max(depth_of(right)),
            }
        }
        depth_of(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn leaves_of(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Internal { left, right, .. } => leaves_of(left) + leaves_of(right),
            }
        }
        leaves_of(&self.root)
    }
}

/// One line per root-to-leaf path: the conjunction of split conditions,
/// the leaf class, and its probability to three decimals.
pub fn export_rules(
    model: &DecisionTreeModel,
    feature_names: &[String],
    class_names: &[String],
) -> Result<Vec<String>> {
    if feature_names.len() != model.n_features {
        return Err(Error::invalid(format!(
            "{} feature names for a {}-feature model",
            feature_names.len(),
            model.n_features
        )));
    }
    if class_names.len() != model.n_classes {
        return Err(Error::invalid("class name count mismatch"));
    }
    let mut rules = Vec::new();
    let mut conditions: Vec<String> = Vec::new();
    fn walk(
        node: &TreeNode,
        feature_names: &[String],
        class_names: &[String],
        conditions: &mut Vec<String>,
        rules: &mut Vec<String>,
    ) {
        match node {
            TreeNode::Internal { feature, threshold, left, right } => {
                conditions.push(format!("{} <= {}", feature_names[*feature], threshold));
                walk(left, feature_names, class_names, conditions, rules);
                conditions.pop();
                conditions.push(format!("{} > {}", feature_names[*feature], threshold));
                walk(right, feature_names, class_names, conditions, rules);
                conditions.pop();
            }
            TreeNode::Leaf { label, probabilities, .. } => {
                let lhs = if conditions.is_empty() {
                    "true".to_string()
                } else {
                    conditions.join(" AND ")
                };
                rules.push(format!(
                    "{lhs} -> {} (p={:.3})",
                    class_names[*label], probabilities[*label]
                ));
            }
        }
    }
    walk(&model.root, feature_names, class_names, &mut conditions, &mut rules);
    Ok(rules)
}
