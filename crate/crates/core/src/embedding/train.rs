use rand::seq::SliceRandom;

use super::loss::loss_gradients_into;
use super::{adam_step, corrupt_subtree, init_model, AdamState, EmbeddingError, EmbeddingModel, Gradients, Result, TrainConfig};
use crate::ast::{NodeTypeTable, Subtree};
use crate::seed;

/// Mean hinge loss of every epoch, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub epoch_losses: Vec<f64>,
}

impl LossTrace {
    pub fn first(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }
}

pub fn train(
    types: &NodeTypeTable,
    corpus: &[Subtree],
    config: &TrainConfig,
) -> Result<(EmbeddingModel, LossTrace)> {
    train_with(types, corpus, config, |_, _| {})
}

/// Online training: every epoch visits the corpus in a fresh seeded order,
/// draws one corruption per subtree and applies one Adam step per pair.
/// `on_epoch` receives the 1-based epoch number and its mean loss.
pub fn train_with(
    types: &NodeTypeTable,
    corpus: &[Subtree],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(EmbeddingModel, LossTrace)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    if types.len() < 2 {
        return Err(EmbeddingError::TooFewTypes(types.len()));
    }
    let mut model = init_model(types, config)?;
    for st in corpus {
        model.check_subtree(st)?;
    }

    let mut state = AdamState::new(&model);
    let mut grads = Gradients::zeros(model.dim());
    let mut corrupt_rng = seed::rng(seed::derive(config.seed, "train/corrupt"));
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_indexed(config.seed, "train/shuffle", epoch as u64)));
        let mut total = 0.0;
        for &i in &order {
            let st = &corpus[i];
            let negative = corrupt_subtree(st, config.k, types.len(), &mut corrupt_rng)?;
            let (loss, _, _) = loss_gradients_into(&model, st, &negative, config.delta, &mut grads)?;
            total += loss;
            if loss > 0.0 {
                adam_step(&mut model, &grads, &mut state, config)?;
            } else {
                // Zero gradient: Adam only advances its counter.
                state.step += 1;
            }
        }
        let mean = total / corpus.len() as f64;
        trace.epoch_losses.push(mean);
        on_epoch(epoch + 1, mean);
    }
    Ok((model, trace))
}
