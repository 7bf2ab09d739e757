use serde::{Deserialize, Serialize};

use super::{feature_values, LabeledSample};

/// Gini impurity of a weighted class histogram.
pub fn gini(class_weights: &[f64]) -> f64 {
    let total: f64 = class_weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - class_weights.iter().map(|w| (w / total).powi(2)).sum::<f64>()
}

/// Index of the heaviest class; the smallest id wins ties.
pub(crate) fn argmax(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned binary tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, features: &crate::ast::TreeFeatures) -> usize {
        let x = feature_values(features);
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Levels on the longest root-to-leaf path; a lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

struct Builder<'a> {
    samples: &'a [LabeledSample],
    class_weights: &'a [f64],
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.class_weights.len()];
        for &i in idx {
            let c = self.samples[i].family;
            h[c] += self.class_weights[c];
        }
        h
    }

    fn best_split(&self, idx: &[usize], total: &[f64]) -> Option<BestSplit> {
        let total_weight: f64 = total.iter().sum();
        let parent = total_weight * gini(total);
        let mut best: Option<BestSplit> = None;
        for feature in 0..2 {
            let mut sorted: Vec<(f64, usize)> = idx
                .iter()
                .map(|&i| (feature_values(&self.samples[i].features)[feature], i))
                .collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = vec![0.0; total.len()];
            for w in 0..sorted.len() - 1 {
                let c = self.samples[sorted[w].1].family;
                left[c] += self.class_weights[c];
                let (value, next) = (sorted[w].0, sorted[w + 1].0);
                if value == next {
                    continue;
                }
                let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let wl: f64 = left.iter().sum();
                let wr: f64 = right.iter().sum();
                let decrease = parent - wl * gini(&left) - wr * gini(&right);
                if decrease > best.as_ref().map_or(1e-12 * total_weight.max(1.0), |b| b.decrease) {
                    best = Some(BestSplit {
                        feature,
                        threshold: (value + next) / 2.0,
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let total = self.histogram(&idx);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class: argmax(&total) });
        let pure = total.iter().filter(|&&w| w > 0.0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 {
            return at;
        }
        let Some(split) = self.best_split(&idx, &total) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| {
            feature_values(&self.samples[i].features)[split.feature] <= split.threshold
        });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

/// Grows a tree by exhaustive search for the split with the largest
/// weighted-Gini decrease. Thresholds are midpoints between consecutive
/// distinct feature values. `max_depth` bounds the number of splits on any
/// path; leaves predict the class of largest weight.
pub fn train_tree(samples: &[LabeledSample], class_weights: &[f64], max_depth: usize) -> DecisionTree {
    let mut builder = Builder {
        samples,
        class_weights,
        max_depth,
        nodes: Vec::new(),
    };
    if samples.is_empty() {
        return DecisionTree {
            nodes: vec![TreeNode::Leaf { class: 0 }],
        };
    }
    builder.grow((0..samples.len()).collect(), 0);
    DecisionTree { nodes: builder.nodes }
}
