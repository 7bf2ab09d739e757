use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::argmax;
use super::{class_weights, train_tree, DecisionTree, ForestConfig, ForestError, LabeledSample, Result};
use crate::ast::TreeFeatures;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub class_weights: Vec<f64>,
    pub trees: Vec<DecisionTree>,
    /// Accuracy over samples left out of at least one bootstrap.
    pub oob_accuracy: Option<f64>,
}

impl RandomForest {
    pub fn votes(&self, features: &TreeFeatures) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(features)] += 1;
        }
        votes
    }

    pub fn predict(&self, features: &TreeFeatures) -> usize {
        predict(self, features)
    }

    pub fn accuracy(&self, samples: &[LabeledSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples
            .iter()
            .filter(|s| self.predict(&s.features) == s.family)
            .count();
        hits as f64 / samples.len() as f64
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("forest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Majority vote; ties go to the smallest class id.
pub fn predict(forest: &RandomForest, features: &TreeFeatures) -> usize {
    let votes: Vec<f64> = forest.votes(features).into_iter().map(|v| v as f64).collect();
    argmax(&votes)
}

/// Trains `n_trees` trees on bootstrap resamples, weighting classes by their
/// frequency in `samples`. Per-tree seeds are drawn up front, so the parallel
/// build equals a sequential one.
pub fn train_forest(samples: &[LabeledSample], n_classes: usize, config: &ForestConfig) -> Result<RandomForest> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ForestError::Empty);
    }
    if let Some(s) = samples.iter().find(|s| s.family >= n_classes) {
        return Err(ForestError::UnknownClass(s.family));
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.family).collect();
    let weights = class_weights(&labels, n_classes)?;
    let present = weights.iter().filter(|&&w| w > 0.0).count();
    if present < 2 {
        return Err(ForestError::TooFewClasses(present));
    }

    let n = samples.len();
    let built: Vec<(DecisionTree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut in_bag = vec![!config.bootstrap; n];
            let bag: Vec<LabeledSample> = if config.bootstrap {
                let mut rng = seed::rng(seed::derive_indexed(config.seed, "forest/tree", t as u64));
                (0..n)
                    .map(|_| {
                        let i = rng.gen_range(0..n);
                        in_bag[i] = true;
                        samples[i]
                    })
                    .collect()
            } else {
                samples.to_vec()
            };
            (train_tree(&bag, &weights, config.max_depth), in_bag)
        })
        .collect();

    let mut oob_votes = vec![vec![0.0; n_classes]; n];
    for (tree, in_bag) in &built {
        for (i, s) in samples.iter().enumerate() {
            if !in_bag[i] {
                oob_votes[i][tree.predict(&s.features)] += 1.0;
            }
        }
    }
    let scored: Vec<bool> = oob_votes
        .iter()
        .zip(samples)
        .filter(|(v, _)| v.iter().any(|&x| x > 0.0))
        .map(|(v, s)| argmax(v) == s.family)
        .collect();
    let oob_accuracy =
        (!scored.is_empty()).then(|| scored.iter().filter(|&&h| h).count() as f64 / scored.len() as f64);

    Ok(RandomForest {
        n_classes,
        class_weights: weights,
        trees: built.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy,
    })
}
