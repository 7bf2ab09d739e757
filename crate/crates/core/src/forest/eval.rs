use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{train_forest, ForestConfig, ForestError, LabeledCorpus, LabeledSample, RandomForest, Result};
use crate::seed;

/// Balanced inverse-frequency weights `N / (K · n_c)` over the `K` classes
/// present in `labels`; absent classes get weight 0.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(ForestError::Empty);
    }
    let mut counts = vec![0usize; n_classes];
    for &c in labels {
        *counts.get_mut(c).ok_or(ForestError::UnknownClass(c))? += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let total = labels.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total / (present * c as f64) })
        .collect())
}

/// Keeps families with at least `min_count` samples and renumbers them
/// densely, preserving label order.
pub fn filter_families(corpus: &LabeledCorpus, min_count: usize) -> Result<LabeledCorpus> {
    let counts = corpus.class_counts();
    let mut remap = vec![None; counts.len()];
    let mut labels = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        if n >= min_count {
            remap[c] = Some(labels.len());
            labels.push(corpus.labels[c].clone());
        }
    }
    if labels.is_empty() {
        return Err(ForestError::NoClassSurvives(min_count));
    }
    let samples = corpus
        .samples
        .iter()
        .filter_map(|s| {
            remap[s.family].map(|family| LabeledSample {
                features: s.features,
                family,
            })
        })
        .collect();
    Ok(LabeledCorpus { labels, samples })
}

fn by_class(samples: &[LabeledSample]) -> Vec<Vec<usize>> {
    let n_classes = samples.iter().map(|s| s.family + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, s) in samples.iter().enumerate() {
        groups[s.family].push(i);
    }
    groups
}

fn class_name(c: usize) -> String {
    format!("class {c}")
}

/// Per-class shuffled split; each class sends `round_half_up(fraction · n_c)`
/// samples to train, clamped so both sides keep at least one.
pub fn stratified_split(
    samples: &[LabeledSample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ForestError::InvalidFraction(train_fraction));
    }
    if samples.is_empty() {
        return Err(ForestError::Empty);
    }
    let mut rng = seed::rng(seed::derive(seed, "forest/split"));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut idx) in by_class(samples).into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(ForestError::ClassTooSmall { class: class_name(c), count: idx.len(), needed: 2 });
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((train_fraction * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
        train.extend(idx[..n_train].iter().map(|&i| samples[i]));
        test.extend(idx[n_train..].iter().map(|&i| samples[i]));
    }
    Ok((train, test))
}

/// Fold id of every sample: classes are shuffled and dealt round-robin.
pub fn stratified_folds(samples: &[LabeledSample], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(ForestError::Config("cv_folds must be at least 2".into()));
    }
    let mut rng = seed::rng(seed::derive(seed, "forest/folds"));
    let mut assignment = vec![0; samples.len()];
    for (c, mut idx) in by_class(samples).into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return Err(ForestError::ClassTooSmall { class: class_name(c), count: idx.len(), needed: folds });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Stratified k-fold cross-validation of a forest built with `config`.
pub fn cross_validate(samples: &[LabeledSample], n_classes: usize, config: &ForestConfig) -> Result<CvReport> {
    let folds = stratified_folds(samples, config.cv_folds, config.seed)?;
    let mut fold_accuracies = Vec::with_capacity(config.cv_folds);
    for fold in 0..config.cv_folds {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (s, &f) in samples.iter().zip(&folds) {
            if f == fold {
                test.push(*s);
            } else {
                train.push(*s);
            }
        }
        let fold_config = ForestConfig {
            seed: seed::derive_indexed(config.seed, "forest/fold", fold as u64),
            ..config.clone()
        };
        let forest = train_forest(&train, n_classes, &fold_config)?;
        fold_accuracies.push(forest.accuracy(&test));
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(CvReport {
        fold_accuracies,
        mean_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSearch {
    pub best_depth: usize,
    pub scores: Vec<(usize, f64)>,
}

/// Grid search of `max_depth` by CV accuracy; ties go to the shallower depth.
pub fn tune_max_depth(
    samples: &[LabeledSample],
    n_classes: usize,
    config: &ForestConfig,
    depths: impl IntoIterator<Item = usize>,
) -> Result<DepthSearch> {
    let mut scores = Vec::new();
    for depth in depths {
        let report = cross_validate(samples, n_classes, &ForestConfig { max_depth: depth, ..config.clone() })?;
        scores.push((depth, report.mean_accuracy));
    }
    let &(best_depth, _) = scores
        .iter()
        .fold(None, |best: Option<&(usize, f64)>, s| match best {
            Some(b) if b.1 >= s.1 => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| ForestError::Config("empty depth grid".into()))?;
    Ok(DepthSearch { best_depth, scores })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(labels: Vec<String>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let k = labels.len();
        let mut counts = vec![vec![0; k]; k];
        for (truth, pred) in pairs {
            counts[truth][pred] += 1;
        }
        Self { labels, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Monospaced heatmap of row-normalised counts.
    pub fn heatmap(&self) -> String {
        const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];
        let width = self.labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let total: usize = row.iter().sum();
            let _ = write!(out, "{l:>width$} |");
            for &c in row {
                let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
                let shade = SHADES[((frac * 4.0).round() as usize).min(4)];
                let _ = write!(out, "{shade}{shade}");
            }
            let _ = writeln!(out, "| {total}");
        }
        let _ = writeln!(out, "{:>width$}  columns: {}", "", self.labels.join(", "));
        let _ = writeln!(out, "accuracy {:.4} ({}/{})", self.accuracy(), self.trace(), self.total());
        out
    }
}

pub fn confusion(forest: &RandomForest, test: &[LabeledSample], labels: &[String]) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        labels.to_vec(),
        test.iter().map(|s| (s.family, forest.predict(&s.features))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::TreeFeatures;

    fn labeled(counts: &[usize]) -> Vec<LabeledSample> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| LabeledSample::new(c + 1, 10 * c + i, c)))
            .collect()
    }

    #[test]
    fn weights() {
        let w = class_weights(&labeled(&[10, 30]).iter().map(|s| s.family).collect::<Vec<_>>(), 2).unwrap();
        assert_eq!(w[0], 2.0);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(class_weights(&[0, 1, 2, 0, 1, 2], 3).unwrap(), vec![1.0; 3]);
        assert_eq!(class_weights(&[1, 1], 2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(class_weights(&[], 2), Err(ForestError::Empty));
    }

    #[test]
    fn filtering() {
        let f = TreeFeatures { depth: 1, node_count: 1 };
        let mut items: Vec<(&str, TreeFeatures)> = vec![("A", f); 50];
        items.extend(vec![("B", f); 10]);
        let kept = filter_families(&LabeledCorpus::from_named(items), 41).unwrap();
        assert_eq!(kept.labels, vec!["A"]);
        assert_eq!(kept.samples.len(), 50);

        let both = LabeledCorpus::from_named([("x", f), ("y", f), ("y", f)]);
        assert_eq!(filter_families(&both, 1).unwrap(), both);

        let forty = LabeledCorpus::from_named(vec![("A", f); 40]);
        assert_eq!(filter_families(&forty, 41), Err(ForestError::NoClassSurvives(41)));
    }

    #[test]
    fn split_proportions_and_partition() {
        let samples = labeled(&[10, 7, 2]);
        let (train, test) = stratified_split(&samples, 0.7, 3).unwrap();
        let count = |v: &[LabeledSample], c| v.iter().filter(|s| s.family == c).count();
        assert_eq!((count(&train, 0), count(&test, 0)), (7, 3));
        // 4.9 rounds to 5.
        assert_eq!((count(&train, 1), count(&test, 1)), (5, 2));
        assert_eq!((count(&train, 2), count(&test, 2)), (1, 1));
        let mut all: Vec<_> = train.iter().chain(&test).map(|s| (s.family, s.features.node_count)).collect();
        all.sort();
        let mut orig: Vec<_> = samples.iter().map(|s| (s.family, s.features.node_count)).collect();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_errors() {
        let samples = labeled(&[10, 1]);
        assert!(matches!(stratified_split(&samples, 0.7, 0), Err(ForestError::ClassTooSmall { .. })));
        assert_eq!(stratified_split(&labeled(&[4]), 1.0, 0), Err(ForestError::InvalidFraction(1.0)));
        assert_eq!(stratified_split(&labeled(&[4]), 0.0, 0), Err(ForestError::InvalidFraction(0.0)));
    }

    #[test]
    fn folds_are_balanced() {
        let samples = labeled(&[9, 6]);
        let folds = stratified_folds(&samples, 3, 1).unwrap();
        for c in 0..2 {
            let mut per = [0; 3];
            for (s, &f) in samples.iter().zip(&folds) {
                if s.family == c {
                    per[f] += 1;
                }
            }
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        assert!(stratified_folds(&labeled(&[2, 5]), 3, 0).is_err());
    }

    #[test]
    fn separable_cv_is_perfect() {
        let samples = labeled(&[12, 12, 12]);
        let config = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        let report = cross_validate(&samples, 3, &config).unwrap();
        assert_eq!(report.fold_accuracies.len(), 3);
        assert_eq!(report.mean_accuracy, 1.0);
    }

    #[test]
    fn depth_search_prefers_shallow_ties() {
        let samples = labeled(&[12, 12]);
        let config = ForestConfig { n_trees: 5, ..ForestConfig::default() };
        let search = tune_max_depth(&samples, 2, &config, 1..=4).unwrap();
        assert_eq!(search.best_depth, 1);
        assert_eq!(search.scores.len(), 4);
    }

    #[test]
    fn confusion_shapes() {
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let perfect = ConfusionMatrix::from_pairs(labels.clone(), [(0, 0), (1, 1), (2, 2), (2, 2)]);
        assert_eq!(perfect.trace(), perfect.total());
        assert_eq!(perfect.row_sums(), vec![1, 1, 2]);
        let constant = ConfusionMatrix::from_pairs(labels, [(0, 1), (1, 1), (2, 1)]);
        assert!(constant.counts.iter().all(|r| r[0] == 0 && r[2] == 0));
        assert!((constant.accuracy() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(constant.to_csv(), "true\\predicted,a,b,c\na,0,1,0\nb,0,1,0\nc,0,1,0\n");
        assert!(constant.heatmap().contains("accuracy 0.3333"));
    }
}
