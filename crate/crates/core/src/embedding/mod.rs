//! Node-type embeddings learned from one-level subtrees.
//!
//! A subtree with parent `p` and children `c_1..c_n` is reconstructed as
//! `tanh(Σ l_i W_i vec(c_i) + b)`, where `W_i` interpolates linearly between a
//! left weight matrix (first child) and a right one (last child), and `l_i` is
//! the child's share of the parent's leaves. Training pushes the squared
//! distance `d` between `vec(p)` and that reconstruction below the distance
//! `d_c` of a corrupted copy by a margin.

mod adam;
mod corrupt;
mod loss;
mod matrix;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{NodeTypeTable, Subtree};
use crate::seed;

pub use adam::{adam_step, AdamState};
pub use corrupt::corrupt_subtree;
pub use loss::{hinge_loss, loss_gradients, Gradients, LossGradients};
pub use matrix::Matrix;
pub use train::{train, train_with, LossTrace};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("unknown node type id {0}")]
    UnknownType(u32),
    #[error("child position {i} out of range 1..={n}")]
    PositionOutOfRange { i: usize, n: usize },
    #[error("corrupted subtree does not match the original's structure")]
    StructureMismatch,
    #[error("subtree has no children")]
    EmptySubtree,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("need at least 2 node types, have {0}")]
    TooFewTypes(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Training hyperparameters. Margin and corruption count default to 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub delta: f64,
    pub k: usize,
    pub n_f: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 3.0,
            k: 3,
            n_f: 30,
            epochs: 200,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(EmbeddingError::Config(msg.to_owned()));
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta must be a finite non-negative number");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.n_f == 0 {
            return bad("n_f must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative");
        }
        Ok(())
    }
}

/// Learned parameters: one embedding per node type plus the shared
/// reconstruction weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub types: NodeTypeTable,
    /// Row `t` is the embedding of type `t` (the transpose of the
    /// `N_f × T` matrix stored in model files).
    pub vectors: Matrix,
    pub w_left: Matrix,
    pub w_right: Matrix,
    pub bias: Vec<f64>,
}

impl EmbeddingModel {
    pub fn zeros(types: NodeTypeTable, dim: usize) -> Self {
        let t = types.len();
        Self {
            types,
            vectors: Matrix::zeros(t, dim),
            w_left: Matrix::zeros(dim, dim),
            w_right: Matrix::zeros(dim, dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn type_count(&self) -> usize {
        self.vectors.rows()
    }

    pub fn embedding(&self, type_id: u32) -> Result<&[f64]> {
        if (type_id as usize) < self.type_count() {
            Ok(self.vectors.row(type_id as usize))
        } else {
            Err(EmbeddingError::UnknownType(type_id))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.is_finite()
            && self.w_left.is_finite()
            && self.w_right.is_finite()
            && self.bias.iter().all(|x| x.is_finite())
    }

    pub fn check_subtree(&self, st: &Subtree) -> Result<()> {
        if st.children.is_empty() {
            return Err(EmbeddingError::EmptySubtree);
        }
        match st.signature().into_iter().find(|&t| t as usize >= self.type_count()) {
            Some(t) => Err(EmbeddingError::UnknownType(t)),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_owned(),
            types: self.types.clone(),
            n_f: self.dim(),
            v: self.vectors.transpose(),
            w_l: self.w_left.clone(),
            w_r: self.w_right.clone(),
            b: self.bias.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        let bad = |msg: String| Err(EmbeddingError::Format(msg));
        if file.format != MODEL_FORMAT {
            return bad(format!("unsupported format `{}`", file.format));
        }
        let (dim, t) = (file.n_f, file.types.len());
        if (file.v.rows(), file.v.cols()) != (dim, t) {
            return bad(format!("V must be {dim}x{t}"));
        }
        for (name, m) in [("W_l", &file.w_l), ("W_r", &file.w_r)] {
            if (m.rows(), m.cols()) != (dim, dim) || m.as_slice().len() != dim * dim {
                return bad(format!("{name} must be {dim}x{dim}"));
            }
        }
        if file.b.len() != dim || file.v.as_slice().len() != dim * t {
            return bad("parameter length mismatch".into());
        }
        let model = Self {
            types: file.types,
            vectors: file.v.transpose(),
            w_left: file.w_l,
            w_right: file.w_r,
            bias: file.b,
        };
        if !model.is_finite() {
            return bad("non-finite parameter".into());
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

const MODEL_FORMAT: &str = "psast-embedding/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    types: NodeTypeTable,
    n_f: usize,
    /// `N_f × T`, column `t` is the embedding of type `t`.
    v: Matrix,
    w_l: Matrix,
    w_r: Matrix,
    b: Vec<f64>,
}

/// Mixing coefficients `(left, right)` of child `i` (1-based) among `n`.
/// A lone child takes the average of both matrices.
pub fn position_coefficients(i: usize, n: usize) -> Result<(f64, f64)> {
    if i == 0 || i > n {
        return Err(EmbeddingError::PositionOutOfRange { i, n });
    }
    if n == 1 {
        return Ok((0.5, 0.5));
    }
    let span = (n - 1) as f64;
    Ok(((n - i) as f64 / span, (i - 1) as f64 / span))
}

pub fn position_weight(w_left: &Matrix, w_right: &Matrix, i: usize, n: usize) -> Result<Matrix> {
    let (a, b) = position_coefficients(i, n)?;
    Ok(w_left.blend(a, w_right, b))
}

/// Intermediate values of one reconstruction, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    /// `Σ l_i a_i vec(c_i)`, the input to `W_l`.
    pub left_input: Vec<f64>,
    /// `Σ l_i b_i vec(c_i)`, the input to `W_r`.
    pub right_input: Vec<f64>,
    /// `tanh(z)`
    pub reconstruction: Vec<f64>,
    /// `vec(p) - tanh(z)`
    pub residual: Vec<f64>,
    pub distance: f64,
}

pub(crate) fn forward(model: &EmbeddingModel, st: &Subtree) -> Result<Forward> {
    model.check_subtree(st)?;
    let dim = model.dim();
    let n = st.arity();
    let mut left_input = vec![0.0; dim];
    let mut right_input = vec![0.0; dim];
    for (pos, child) in st.children.iter().enumerate() {
        let (a, b) = position_coefficients(pos + 1, n)?;
        let v = model.vectors.row(child.type_id as usize);
        let (sa, sb) = (child.leaf_fraction * a, child.leaf_fraction * b);
        for ((l, r), x) in left_input.iter_mut().zip(right_input.iter_mut()).zip(v) {
            *l += sa * x;
            *r += sb * x;
        }
    }
    let mut z = model.bias.clone();
    model.w_left.mul_vec_add(&left_input, &mut z);
    model.w_right.mul_vec_add(&right_input, &mut z);
    let reconstruction: Vec<f64> = z.iter().map(|x| x.tanh()).collect();
    let parent = model.vectors.row(st.parent_type as usize);
    let residual: Vec<f64> = parent
        .iter()
        .zip(&reconstruction)
        .map(|(p, h)| p - h)
        .collect();
    let distance = residual.iter().map(|r| r * r).sum();
    Ok(Forward {
        left_input,
        right_input,
        reconstruction,
        residual,
        distance,
    })
}

/// Squared distance between a parent's embedding and the reconstruction
/// from its children.
pub fn subtree_distance(model: &EmbeddingModel, st: &Subtree) -> Result<f64> {
    forward(model, st).map(|f| f.distance)
}

/// Draws every parameter uniformly from `[-init_scale, init_scale]`.
pub fn init_model(types: &NodeTypeTable, config: &TrainConfig) -> Result<EmbeddingModel> {
    if types.is_empty() {
        return Err(EmbeddingError::TooFewTypes(0));
    }
    config.validate()?;
    let mut rng = seed::rng(seed::derive(config.seed, "train/init"));
    let scale = config.init_scale;
    let mut model = EmbeddingModel::zeros(types.clone(), config.n_f);
    let mut draw = |xs: &mut [f64]| {
        for x in xs {
            *x = if scale == 0.0 {
                0.0
            } else {
                rng.gen_range(-scale..=scale)
            };
        }
    };
    draw(model.vectors.as_mut_slice());
    draw(model.w_left.as_mut_slice());
    draw(model.w_right.as_mut_slice());
    draw(&mut model.bias);
    Ok(model)
}
