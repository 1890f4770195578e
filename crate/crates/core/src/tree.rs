//! Regression trees shared by the boosting and forest engines.
//!
//! Trees are grown best-first on per-sample gradient/hessian statistics with
//! exact greedy split search over the sorted distinct values of each
//! feature. With `g = prediction − target` and unit hessians the split gain
//! is exactly the reduction in squared error, which is what the forest uses.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

/// A binary regression tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index always ends on a leaf"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Adds each split's gain to `gains[feature]`.
    pub fn accumulate_gain(&self, gains: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = *node {
                gains[feature] += gain;
            }
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub(crate) fn set_leaf_value(&mut self, node: usize, value: f64) {
        self.nodes[node] = Node::Leaf { value };
    }
}

/// Column-major copy of a feature matrix with every column presorted.
pub(crate) struct ColumnStore {
    pub columns: Vec<Vec<f64>>,
    pub sorted: Vec<Vec<u32>>,
}

impl ColumnStore {
    pub fn new(rows: &[Vec<f64>], n_features: usize) -> Self {
        let columns: Vec<Vec<f64>> = (0..n_features)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        ColumnStore { columns, sorted }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// True when no column takes more than one value.
    pub fn all_constant(&self) -> bool {
        self.columns.iter().all(|c| c.windows(2).all(|w| w[0] == w[1]))
    }
}

pub(crate) struct GrowParams {
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    /// Number of candidate features drawn at random for every node; `None`
    /// evaluates all of them.
    pub features_per_node: Option<usize>,
}

pub(crate) struct GrownTree {
    pub tree: RegressionTree,
    /// Training rows (with multiplicity 1 each) routed to every leaf node.
    pub leaf_rows: Vec<(usize, Vec<u32>)>,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature_slot: usize,
    threshold: f64,
    left_g: f64,
    left_h: f64,
}

struct Pending {
    node: usize,
    rows: Vec<u32>,
    sorted: Vec<Vec<u32>>,
    g: f64,
    h: f64,
    best: Option<SplitCandidate>,
}

struct Stats<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    weight: &'a [f64],
}

fn best_split_for_feature(
    column: &[f64],
    sorted: &[u32],
    stats: &Stats,
    total_g: f64,
    total_h: f64,
    min_leaf: f64,
) -> Option<(f64, f64, f64, f64)> {
    let total_w: f64 = sorted.iter().map(|&r| stats.weight[r as usize]).sum();
    if total_w < 2.0 * min_leaf {
        return None;
    }
    let parent = total_g * total_g / total_h;
    let (mut gl, mut hl, mut wl) = (0.0, 0.0, 0.0);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0] as usize, pair[1] as usize);
        let w = stats.weight[a];
        gl += stats.grad[a] * w;
        hl += stats.hess[a] * w;
        wl += w;
        let (xa, xb) = (column[a], column[b]);
        if xa == xb || wl < min_leaf || total_w - wl < min_leaf {
            continue;
        }
        let (gr, hr) = (total_g - gl, total_h - hl);
        if hl <= 0.0 || hr <= 0.0 {
            continue;
        }
        let gain = gl * gl / hl + gr * gr / hr - parent;
        if best.is_none_or(|(g, ..)| gain > g) {
            let mid = xa + (xb - xa) / 2.0;
            let threshold = if mid < xb { mid } else { xa };
            best = Some((gain, threshold, gl, hl));
        }
    }
    best
}

const PARALLEL_FEATURES: usize = 32;

fn find_best(
    store: &ColumnStore,
    features: &[usize],
    pending: &Pending,
    eligible: &[usize],
    stats: &Stats,
    params: &GrowParams,
    min_gain: f64,
) -> Option<SplitCandidate> {
    let min_leaf = params.min_samples_leaf.max(1) as f64;
    let eval = |&slot: &usize| {
        best_split_for_feature(
            &store.columns[features[slot]],
            &pending.sorted[slot],
            stats,
            pending.g,
            pending.h,
            min_leaf,
        )
        .map(|(gain, threshold, left_g, left_h)| SplitCandidate {
            gain,
            feature_slot: slot,
            threshold,
            left_g,
            left_h,
        })
    };
    let found: Vec<Option<SplitCandidate>> = if eligible.len() >= PARALLEL_FEATURES {
        eligible.par_iter().map(eval).collect()
    } else {
        eligible.iter().map(eval).collect()
    };
    // Slots are ascending, so strict improvement keeps the lowest feature
    // index among equal gains.
    found
        .into_iter()
        .flatten()
        .filter(|c| c.gain > min_gain)
        .fold(None, |acc: Option<SplitCandidate>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

/// Grows one tree on the rows with positive `weight`.
///
/// `features` lists the column indices the tree may split on. Leaf values
/// are Newton steps `−G/H`.
pub(crate) fn grow_tree<R: Rng>(
    store: &ColumnStore,
    features: &[usize],
    grad: &[f64],
    hess: &[f64],
    weight: &[f64],
    params: &GrowParams,
    rng: &mut R,
) -> GrownTree {
    let stats = Stats { grad, hess, weight };
    let n = store.n_rows();
    let rows: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] > 0.0).collect();
    let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
        let r = r as usize;
        (g + grad[r] * weight[r], h + hess[r] * weight[r])
    });
    // Gains below this are rounding noise relative to the root's total
    // squared-gradient mass.
    let scale: f64 = rows
        .iter()
        .map(|&r| {
            let r = r as usize;
            weight[r] * grad[r] * grad[r] / hess[r]
        })
        .sum();
    let min_gain = 1e-10 * scale;

    let sorted = features
        .iter()
        .map(|&f| {
            store.sorted[f]
                .iter()
                .copied()
                .filter(|&r| weight[r as usize] > 0.0)
                .collect()
        })
        .collect();

    let mut tree = RegressionTree {
        nodes: vec![Node::Leaf { value: 0.0 }],
    };
    let all_slots: Vec<usize> = (0..features.len()).collect();
    let pick_slots = |rng: &mut R| -> Vec<usize> {
        match params.features_per_node {
            Some(k) if k < features.len() => {
                let mut s = rand::seq::index::sample(rng, features.len(), k.max(1)).into_vec();
                s.sort_unstable();
                s
            }
            _ => all_slots.clone(),
        }
    };

    let mut root = Pending {
        node: 0,
        rows,
        sorted,
        g,
        h,
        best: None,
    };
    let slots = pick_slots(rng);
    root.best = find_best(store, features, &root, &slots, &stats, params, min_gain);
    let mut open = vec![root];
    let mut finished: Vec<Pending> = Vec::new();
    let mut n_leaves = 1;
    let mut in_left = vec![false; n];

    while n_leaves < params.max_leaves {
        // Highest gain first; ties go to the earliest node.
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.best.map(|b| (i, b.gain, p.node)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
        let Some((idx, _, _)) = pick else { break };
        let parent = open.swap_remove(idx);
        let split = parent.best.expect("picked node has a split");
        let feature = features[split.feature_slot];
        let column = &store.columns[feature];

        for &r in &parent.rows {
            in_left[r as usize] = column[r as usize] <= split.threshold;
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            parent.rows.iter().partition(|&&r| in_left[r as usize]);
        let (left_sorted, right_sorted): (Vec<Vec<u32>>, Vec<Vec<u32>>) = parent
            .sorted
            .iter()
            .map(|list| list.iter().partition(|&&r| in_left[r as usize]))
            .unzip();

        let left_id = tree.nodes.len();
        let right_id = left_id + 1;
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes[parent.node] = Node::Split {
            feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
            gain: split.gain,
        };
        n_leaves += 1;

        let mut left = Pending {
            node: left_id,
            rows: left_rows,
            sorted: left_sorted,
            g: split.left_g,
            h: split.left_h,
            best: None,
        };
        let mut right = Pending {
            node: right_id,
            rows: right_rows,
            sorted: right_sorted,
            g: parent.g - split.left_g,
            h: parent.h - split.left_h,
            best: None,
        };
        for child in [&mut left, &mut right] {
            let slots = pick_slots(rng);
            child.best = find_best(store, features, child, &slots, &stats, params, min_gain);
        }
        open.push(left);
        open.push(right);
    }
    finished.extend(open);
    finished.sort_by_key(|p| p.node);

    let mut leaf_rows = Vec::with_capacity(finished.len());
    for p in finished {
        let value = if p.h > 0.0 { -p.g / p.h } else { 0.0 };
        tree.set_leaf_value(p.node, value);
        leaf_rows.push((p.node, p.rows));
    }
    GrownTree { tree, leaf_rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grow_simple(xs: &[f64], ys: &[f64], max_leaves: usize, min_leaf: usize) -> GrownTree {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let store = ColumnStore::new(&rows, 1);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let grad: Vec<f64> = ys.iter().map(|y| mean - y).collect();
        let ones = vec![1.0; ys.len()];
        let params = GrowParams {
            max_leaves,
            min_samples_leaf: min_leaf,
            features_per_node: None,
        };
        grow_tree(
            &store,
            &[0],
            &grad,
            &ones,
            &ones,
            &params,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn stump_splits_between_classes() {
        let xs = [-3.0, -2.0, -0.5, 0.0, 1.0, 2.0];
        let ys = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let grown = grow_simple(&xs, &ys, 2, 1);
        match grown.tree.nodes[0] {
            Node::Split { threshold, gain, .. } => {
                assert!((-0.5..0.0).contains(&threshold));
                // SSE of the parent: 6 · 0.25.
                assert!((gain - 1.5).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(grown.tree.n_leaves(), 2);
    }

    #[test]
    fn respects_leaf_budget_and_min_samples() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 0.7).sin()).collect();
        let grown = grow_simple(&xs, &ys, 7, 4);
        assert!(grown.tree.n_leaves() <= 7);
        assert!(grown.tree.nodes.len() < 2 * 7);
        for (_, rows) in &grown.leaf_rows {
            assert!(rows.len() >= 4);
        }
        let total: usize = grown.leaf_rows.iter().map(|(_, r)| r.len()).sum();
        assert_eq!(total, 50);
    }

    #[test]
    fn pure_node_is_not_split() {
        let grown = grow_simple(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0], 8, 1);
        assert_eq!(grown.tree.nodes.len(), 1);
    }

    #[test]
    fn leaf_rows_match_routing() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 5.0).floor()).collect();
        let grown = grow_simple(&xs, &ys, 10, 1);
        for (node, rows) in &grown.leaf_rows {
            for &r in rows {
                assert_eq!(grown.tree.leaf_index(&[xs[r as usize]]), *node);
            }
        }
    }
}
