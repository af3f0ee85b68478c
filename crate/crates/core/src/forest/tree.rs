use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Weighted Gini impurity of a binary partition, given sizes and positive
/// counts of each side.
pub fn split_impurity(n_left: usize, pos_left: usize, n_right: usize, pos_right: usize) -> f64 {
    let gini = |n: usize, p: usize| {
        if n == 0 {
            0.0
        } else {
            let q = p as f64 / n as f64;
            2.0 * q * (1.0 - q)
        }
    };
    let n = (n_left + n_right) as f64;
    (n_left as f64 * gini(n_left, pos_left) + n_right as f64 * gini(n_right, pos_right)) / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub impurity: f64,
}

/// Lowest-impurity split of `rows` over `features` with midpoint
/// thresholds between consecutive distinct values. Ties go to the earlier
/// feature in `features`, then to the lower threshold. Returns `None` if no
/// split leaves `min_leaf` samples on both sides (e.g. constant features).
pub fn best_split(
    x: &Tensor,
    y: &[bool],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = rows.len();
    let total_pos = rows.iter().filter(|&&r| y[r]).count();
    let mut best: Option<Split> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (x.row(r)[f], y[r])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pos_left = 0;
        for i in 0..n.saturating_sub(1) {
            pos_left += sorted[i].1 as usize;
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            let n_left = i + 1;
            if a == b || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let imp = split_impurity(n_left, pos_left, n - n_left, total_pos - pos_left);
            if best.is_none_or(|s| imp < s.impurity) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity: imp,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `probs = [P(negative), P(positive)]` among training samples.
    Leaf { probs: [f64; 2], samples: usize },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Binary CART classifier; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Grows a tree on `rows` (which may repeat) until nodes are pure,
    /// cannot be split, or reach `max_depth`. Each node examines a fresh
    /// random subset of `max_features` features; if none of them admits a
    /// split the remaining features are tried in random order.
    pub fn fit<R: Rng + ?Sized>(
        x: &Tensor,
        y: &[bool],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(x, y, rows.to_vec(), 0, params, rng);
        tree
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor,
        y: &[bool],
        rows: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&r| y[r]).count();
        let p1 = pos as f64 / rows.len().max(1) as f64;
        self.nodes.push(Node::Leaf {
            probs: [1.0 - p1, p1],
            samples: rows.len(),
        });
        let pure = pos == 0 || pos == rows.len();
        if pure || params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let n_features = x.cols();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(rng);
        let k = params
            .max_features
            .unwrap_or(n_features)
            .clamp(1, n_features);
        let min_leaf = params.min_samples_leaf.max(1);
        let mut split = best_split(x, y, &rows, &order[..k], min_leaf);
        if split.is_none() {
            for &f in &order[k..] {
                split = best_split(x, y, &rows, &[f], min_leaf);
                if split.is_some() {
                    break;
                }
            }
        }
        let Some(s) = split else { return id };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| x.row(r)[s.feature] <= s.threshold);
        let l = self.grow(x, y, left, depth + 1, params, rng);
        let r = self.grow(x, y, right, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Positive-class probability of the leaf reached by `sample`.
    pub fn predict_proba(&self, sample: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs, .. } => return probs[1],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if sample[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn votes_positive(&self, sample: &[f64]) -> bool {
        self.predict_proba(sample) > 0.5
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
