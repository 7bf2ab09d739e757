//! Structure-based representation learning for PowerShell abstract syntax trees.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`ast`]: the tree data model, the `.ast.tsv` interchange format, tree
//!   statistics and one-level subtree extraction.
//! - [`decode`]: `-EncodedCommand` style Base-64 / UTF-16LE decoding.
//! - [`embedding`]: node-type embeddings trained with a margin hinge objective
//!   against corrupted subtrees, optimised with Adam.
//! - [`forest`]: class-weighted decision trees and random forests over
//!   `(depth, node_count)` features, with splitting, cross-validation and
//!   confusion matrices.
//! - [`analysis`]: distances, nearest neighbours, k-means and agglomerative
//!   clustering over trained embeddings.
//! - [`synth`]: a deterministic synthetic corpus generator.

pub mod analysis;
pub mod ast;
pub mod decode;
pub mod embedding;
pub mod forest;
pub mod seed;
pub mod synth;

pub use ast::{Ast, AstNode, NodeTypeTable, Subtree, SubtreeChild, TreeFeatures};
pub use embedding::{EmbeddingModel, LossTrace, TrainConfig};
pub use forest::{ConfusionMatrix, ForestConfig, RandomForest};
