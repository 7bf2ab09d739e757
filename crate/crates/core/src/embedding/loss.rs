use std::collections::BTreeMap;

use super::{forward, position_coefficients, EmbeddingError, EmbeddingModel, Forward, Matrix, Result};
use crate::ast::Subtree;

/// `max(0, delta + d - d_c)`
pub fn hinge_loss(d: f64, d_c: f64, delta: f64) -> f64 {
    (delta + d - d_c).max(0.0)
}

/// Gradient of the hinge objective. Only embedding rows of types that occur
/// in the subtree pair are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub vectors: BTreeMap<u32, Vec<f64>>,
    pub w_left: Matrix,
    pub w_right: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        Self {
            vectors: BTreeMap::new(),
            w_left: Matrix::zeros(dim, dim),
            w_right: Matrix::zeros(dim, dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn clear(&mut self) {
        self.vectors.clear();
        self.w_left.fill(0.0);
        self.w_right.fill(0.0);
        self.bias.fill(0.0);
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.vectors
            .values()
            .flatten()
            .chain(self.w_left.as_slice())
            .chain(self.w_right.as_slice())
            .chain(&self.bias)
            .copied()
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|g| g == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    fn row(&mut self, type_id: u32) -> &mut Vec<f64> {
        let dim = self.bias.len();
        self.vectors.entry(type_id).or_insert_with(|| vec![0.0; dim])
    }

    /// Adds `sign · ∂d/∂θ` for the reconstruction described by `fwd`.
    fn accumulate(&mut self, model: &EmbeddingModel, st: &Subtree, fwd: &Forward, sign: f64) -> Result<()> {
        let dim = model.dim();
        // ∂d/∂vec(p) = 2 r, ∂d/∂z = -2 r ⊙ (1 - h²)
        let dz: Vec<f64> = fwd
            .residual
            .iter()
            .zip(&fwd.reconstruction)
            .map(|(r, h)| -2.0 * r * (1.0 - h * h))
            .collect();
        for (g, r) in self.row(st.parent_type).iter_mut().zip(&fwd.residual) {
            *g += sign * 2.0 * r;
        }
        for (g, d) in self.bias.iter_mut().zip(&dz) {
            *g += sign * d;
        }
        self.w_left.add_outer(sign, &dz, &fwd.left_input);
        self.w_right.add_outer(sign, &dz, &fwd.right_input);

        let mut back_left = vec![0.0; dim];
        let mut back_right = vec![0.0; dim];
        model.w_left.mul_vec_transposed_add(&dz, &mut back_left);
        model.w_right.mul_vec_transposed_add(&dz, &mut back_right);
        let n = st.arity();
        for (pos, child) in st.children.iter().enumerate() {
            let (a, b) = position_coefficients(pos + 1, n)?;
            let (sa, sb) = (sign * child.leaf_fraction * a, sign * child.leaf_fraction * b);
            for ((g, l), r) in self.row(child.type_id).iter_mut().zip(&back_left).zip(&back_right) {
                *g += sa * l + sb * r;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub d: f64,
    pub d_c: f64,
    pub grads: Gradients,
}

fn same_structure(a: &Subtree, b: &Subtree) -> bool {
    a.parent_type == b.parent_type
        && a.arity() == b.arity()
        && a.children
            .iter()
            .zip(&b.children)
            .all(|(x, y)| x.leaf_fraction == y.leaf_fraction)
}

/// Hinge loss of a genuine/corrupted pair and its gradient with respect to
/// every parameter. The gradient is exactly zero when the margin holds
/// (`delta + d - d_c <= 0`).
pub fn loss_gradients(
    model: &EmbeddingModel,
    st: &Subtree,
    st_c: &Subtree,
    delta: f64,
) -> Result<LossGradients> {
    let mut grads = Gradients::zeros(model.dim());
    let (loss, d, d_c) = loss_gradients_into(model, st, st_c, delta, &mut grads)?;
    Ok(LossGradients { loss, d, d_c, grads })
}

/// Buffer-reusing form of [`loss_gradients`]; `grads` is cleared first.
pub(crate) fn loss_gradients_into(
    model: &EmbeddingModel,
    st: &Subtree,
    st_c: &Subtree,
    delta: f64,
    grads: &mut Gradients,
) -> Result<(f64, f64, f64)> {
    if !same_structure(st, st_c) {
        return Err(EmbeddingError::StructureMismatch);
    }
    let pos = forward(model, st)?;
    let neg = forward(model, st_c)?;
    grads.clear();
    let loss = hinge_loss(pos.distance, neg.distance, delta);
    if delta + pos.distance - neg.distance > 0.0 {
        grads.accumulate(model, st, &pos, 1.0)?;
        grads.accumulate(model, st_c, &neg, -1.0)?;
    }
    Ok((loss, pos.distance, neg.distance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{NodeTypeTable, SubtreeChild};
    use crate::embedding::{init_model, TrainConfig};

    #[test]
    fn hinge_values() {
        assert_eq!(hinge_loss(2.0, 2.0, 3.0), 3.0);
        assert_eq!(hinge_loss(0.0, 10.0, 3.0), 0.0);
        assert_eq!(hinge_loss(5.0, 1.0, 3.0), 7.0);
        assert_eq!(hinge_loss(5.0, 1.0, 0.0), 4.0);
        assert_eq!(hinge_loss(1.0, 5.0, 0.0), 0.0);
    }

    fn model() -> EmbeddingModel {
        let types = NodeTypeTable::from_names(["A", "B", "C", "D"]).unwrap();
        init_model(&types, &TrainConfig { n_f: 3, init_scale: 0.8, ..TrainConfig::default() }).unwrap()
    }

    fn st(children: &[u32]) -> Subtree {
        let f = 1.0 / children.len() as f64;
        Subtree::new(
            0,
            children
                .iter()
                .map(|&type_id| SubtreeChild { type_id, leaf_fraction: f })
                .collect(),
        )
    }

    #[test]
    fn inactive_margin_gives_zero_gradient() {
        let m = model();
        let lg = loss_gradients(&m, &st(&[1, 2]), &st(&[3, 3]), -1e6).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.is_zero());
    }

    #[test]
    fn identical_pair_cancels() {
        let m = model();
        let lg = loss_gradients(&m, &st(&[1, 2]), &st(&[1, 2]), 3.0).unwrap();
        assert_eq!(lg.loss, 3.0);
        assert!(lg.grads.values().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn rejects_mismatched_pairs() {
        let m = model();
        assert!(matches!(
            loss_gradients(&m, &st(&[1, 2]), &st(&[1]), 3.0),
            Err(EmbeddingError::StructureMismatch)
        ));
        let mut other = st(&[1, 2]);
        other.parent_type = 3;
        assert!(loss_gradients(&m, &st(&[1, 2]), &other, 3.0).is_err());
    }

    #[test]
    fn bias_gradient_matches_finite_difference() {
        let m = model();
        let (a, b) = (st(&[1, 2, 3]), st(&[2, 0, 1]));
        let lg = loss_gradients(&m, &a, &b, 3.0).unwrap();
        let h = 1e-6;
        for j in 0..m.dim() {
            let eval = |shift: f64| {
                let mut p = m.clone();
                p.bias[j] += shift;
                let d = super::super::subtree_distance(&p, &a).unwrap();
                let dc = super::super::subtree_distance(&p, &b).unwrap();
                hinge_loss(d, dc, 3.0)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - lg.grads.bias[j]).abs() < 1e-6, "{fd} vs {}", lg.grads.bias[j]);
        }
    }
}
