//! Malware-family classification from `(depth, node_count)` with
//! class-weighted random forests.

mod ensemble;
mod eval;
mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::TreeFeatures;

pub use ensemble::{predict, train_forest, RandomForest};
pub use eval::{
    class_weights, confusion, cross_validate, filter_families, stratified_folds, stratified_split,
    tune_max_depth, ConfusionMatrix, CvReport, DepthSearch,
};
pub use tree::{gini, train_tree, DecisionTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("no samples")]
    Empty,
    #[error("need at least 2 classes, have {0}")]
    TooFewClasses(usize),
    #[error("no family has at least {0} examples")]
    NoClassSurvives(usize),
    #[error("class `{class}` has {count} samples, needs at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("class id {0} out of range")]
    UnknownClass(usize),
}

pub type Result<T, E = ForestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: TreeFeatures,
    pub family: usize,
}

impl LabeledSample {
    pub fn new(depth: usize, node_count: usize, family: usize) -> Self {
        Self {
            features: TreeFeatures { depth, node_count },
            family,
        }
    }
}

/// Feature vector used by the trees: `[depth, node_count]`.
pub fn feature_values(features: &TreeFeatures) -> [f64; 2] {
    [features.depth as f64, features.node_count as f64]
}

pub const FEATURE_NAMES: [&str; 2] = ["depth", "node_count"];

/// Samples together with the names of their class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub labels: Vec<String>,
    pub samples: Vec<LabeledSample>,
}

impl LabeledCorpus {
    /// Class ids follow the lexicographic order of family names.
    pub fn from_named<S: AsRef<str>>(items: impl IntoIterator<Item = (S, TreeFeatures)>) -> Self {
        let items: Vec<(String, TreeFeatures)> = items
            .into_iter()
            .map(|(s, f)| (s.as_ref().to_owned(), f))
            .collect();
        let ids: BTreeMap<&str, usize> = items
            .iter()
            .map(|(s, _)| s.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let samples = items
            .iter()
            .map(|(s, f)| LabeledSample {
                features: *f,
                family: ids[s.as_str()],
            })
            .collect();
        Self {
            labels: ids.keys().map(|s| s.to_string()).collect(),
            samples,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for s in &self.samples {
            counts[s.family] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Maximum number of splits on any root-to-leaf path.
    pub max_depth: usize,
    pub min_samples_per_family: usize,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 11,
            min_samples_per_family: 41,
            train_fraction: 0.7,
            cv_folds: 3,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(ForestError::Config("n_trees must be positive".into()));
        }
        if self.max_depth == 0 {
            return Err(ForestError::Config("max_depth must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ForestError::InvalidFraction(self.train_fraction));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment() {
        let c = ForestConfig::default();
        assert_eq!(c.max_depth, 11);
        assert_eq!(c.min_samples_per_family, 41);
        assert_eq!(c.train_fraction, 0.7);
        assert_eq!(c.cv_folds, 3);
        assert_eq!(c.n_trees, 100);
    }

    #[test]
    fn labels_are_sorted() {
        let f = TreeFeatures { depth: 1, node_count: 1 };
        let corpus = LabeledCorpus::from_named([("b", f), ("a", f), ("b", f)]);
        assert_eq!(corpus.labels, vec!["a", "b"]);
        assert_eq!(corpus.class_counts(), vec![1, 2]);
        assert_eq!(corpus.samples[0].family, 1);
    }
}
