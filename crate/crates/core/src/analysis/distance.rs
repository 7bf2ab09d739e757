use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Result};
use crate::embedding::{EmbeddingModel, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(AnalysisError::UnknownOption { kind: "metric", value: other.into() }),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Cosine => "cosine",
        })
    }
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Self::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                match (na == 0.0, nb == 0.0) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 1.0,
                    _ => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
                }
            }
        }
    }
}

/// Symmetric matrix of distances between labelled points.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub metric: Metric,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Distances between the rows of `points`.
    pub fn from_points(points: &Matrix, labels: Vec<String>, metric: Metric) -> Self {
        let n = points.rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = metric.distance(points.row(i), points.row(j));
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { labels, metric, values }
    }

    /// Wraps a precomputed square matrix, e.g. points on a line.
    pub fn from_values(labels: Vec<String>, metric: Metric, values: Vec<f64>) -> Option<Self> {
        (values.len() == labels.len() * labels.len()).then_some(Self { labels, metric, values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }
}

pub fn pairwise_distances(model: &EmbeddingModel, metric: Metric) -> DistanceMatrix {
    DistanceMatrix::from_points(&model.vectors, model.types.names().to_vec(), metric)
}

/// The `m` closest other points, nearest first; equal distances are ordered
/// by id.
pub fn nearest_neighbors(matrix: &DistanceMatrix, id: usize, m: usize) -> Result<Vec<(usize, f64)>> {
    let t = matrix.len();
    if id >= t {
        return Err(AnalysisError::UnknownType(id));
    }
    if m >= t {
        return Err(AnalysisError::TooManyNeighbors { m, t });
    }
    let mut others: Vec<(usize, f64)> = (0..t).filter(|&j| j != id).map(|j| (j, matrix.get(id, j))).collect();
    others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    others.truncate(m);
    Ok(others)
}

/// `type<TAB>rank<TAB>neighbor<TAB>distance` for every type.
pub fn neighbors_tsv(matrix: &DistanceMatrix, m: usize) -> Result<String> {
    let mut out = String::from("type\trank\tneighbor\tdistance\n");
    for id in 0..matrix.len() {
        for (rank, (j, d)) in nearest_neighbors(matrix, id, m)?.into_iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", matrix.labels[id], rank + 1, matrix.labels[j], d));
        }
    }
    Ok(out)
}
