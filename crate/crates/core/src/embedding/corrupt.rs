use rand::seq::index::sample;
use rand::Rng;

use super::{EmbeddingError, Result};
use crate::ast::Subtree;

/// Retypes `min(k, n)` distinct children, each to a uniformly drawn type
/// different from its current one. Parent type and leaf fractions are kept.
pub fn corrupt_subtree<R: Rng + ?Sized>(
    st: &Subtree,
    k: usize,
    type_count: usize,
    rng: &mut R,
) -> Result<Subtree> {
    if type_count < 2 {
        return Err(EmbeddingError::TooFewTypes(type_count));
    }
    let n = st.arity();
    let mut out = st.clone();
    for pos in sample(rng, n, k.min(n)) {
        let current = out.children[pos].type_id;
        let mut replacement = rng.gen_range(0..type_count as u32 - 1);
        if replacement >= current {
            replacement += 1;
        }
        out.children[pos].type_id = replacement;
    }
    Ok(out)
}
