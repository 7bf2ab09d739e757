//! Post-training analysis of node-type embeddings.

mod distance;
mod hierarchy;
mod kmeans;

use thiserror::Error;

pub use distance::{nearest_neighbors, neighbors_tsv, pairwise_distances, DistanceMatrix, Metric};
pub use hierarchy::{agglomerate, emit_dendrogram, parse_dendrogram_tsv, Dendrogram, DendrogramFormat, Linkage, Merge};
pub use kmeans::{kmeans, kmeans_csv, KMeansResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need m < T, got m = {m}, T = {t}")]
    TooManyNeighbors { m: usize, t: usize },
    #[error("type id {0} out of range")]
    UnknownType(usize),
    #[error("k = {k} outside 1..={t}")]
    KOutOfRange { k: usize, t: usize },
    #[error("agglomeration needs at least 2 points, have {0}")]
    TooFewPoints(usize),
    #[error("unknown {kind} `{value}`")]
    UnknownOption { kind: &'static str, value: String },
    #[error("dendrogram line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
