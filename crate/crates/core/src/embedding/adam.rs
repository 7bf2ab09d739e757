use super::{EmbeddingError, EmbeddingModel, Gradients, Matrix, Result, TrainConfig};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m_vectors: Matrix,
    v_vectors: Matrix,
    m_left: Matrix,
    v_left: Matrix,
    m_right: Matrix,
    v_right: Matrix,
    m_bias: Vec<f64>,
    v_bias: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &EmbeddingModel) -> Self {
        let (t, dim) = (model.type_count(), model.dim());
        Self {
            step: 0,
            m_vectors: Matrix::zeros(t, dim),
            v_vectors: Matrix::zeros(t, dim),
            m_left: Matrix::zeros(dim, dim),
            v_left: Matrix::zeros(dim, dim),
            m_right: Matrix::zeros(dim, dim),
            v_right: Matrix::zeros(dim, dim),
            m_bias: vec![0.0; dim],
            v_bias: vec![0.0; dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.m_vectors,
            &self.v_vectors,
            &self.m_left,
            &self.v_left,
            &self.m_right,
            &self.v_right,
        ]
        .iter()
        .all(|m| m.is_finite())
            && self.m_bias.iter().chain(&self.v_bias).all(|x| x.is_finite())
    }
}

struct StepSizes {
    beta1: f64,
    beta2: f64,
    correction1: f64,
    correction2: f64,
    learning_rate: f64,
    epsilon: f64,
}

impl StepSizes {
    /// Entries whose gradient is exactly zero are skipped, moments included.
    fn apply(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            if g == 0.0 {
                continue;
            }
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / self.correction1;
            let v_hat = *v / self.correction2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// One bias-corrected Adam update. The step counter always advances.
pub fn adam_step(
    model: &mut EmbeddingModel,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(EmbeddingError::NonFiniteGradient);
    }
    if let Some((&t, _)) = grads.vectors.iter().find(|(&t, _)| t as usize >= model.type_count()) {
        return Err(EmbeddingError::UnknownType(t));
    }
    state.step += 1;
    let t = state.step as f64;
    let sizes = StepSizes {
        beta1: config.beta1,
        beta2: config.beta2,
        correction1: 1.0 - config.beta1.powf(t),
        correction2: 1.0 - config.beta2.powf(t),
        learning_rate: config.learning_rate,
        epsilon: config.epsilon,
    };
    for (&type_id, g) in &grads.vectors {
        let row = type_id as usize;
        sizes.apply(
            model.vectors.row_mut(row),
            g,
            state.m_vectors.row_mut(row),
            state.v_vectors.row_mut(row),
        );
    }
    sizes.apply(
        model.w_left.as_mut_slice(),
        grads.w_left.as_slice(),
        state.m_left.as_mut_slice(),
        state.v_left.as_mut_slice(),
    );
    sizes.apply(
        model.w_right.as_mut_slice(),
        grads.w_right.as_slice(),
        state.m_right.as_mut_slice(),
        state.v_right.as_mut_slice(),
    );
    sizes.apply(&mut model.bias, &grads.bias, &mut state.m_bias, &mut state.v_bias);
    Ok(())
}
