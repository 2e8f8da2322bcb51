//! Grounded decoder: a small causal transformer over a base vocabulary
//! extended with temporal tokens, fed with projected video rows as a soft
//! prompt.
//!
//! Parameters are split into groups ([`ParamGroup`]) so that each training
//! stage can unfreeze a subset:
//!
//! | stage | trainable                          |
//! |-------|------------------------------------|
//! | 1     | projectors                         |
//! | 2     | projectors, embeddings, head       |
//! | 3     | stage 2 plus low-rank adapters     |
//!
//! Backbone weights (attention, feed-forward, norms, positions) are never
//! trained and the backward pass does not compute their gradients.

pub mod checkpoint;
mod lora;
mod model;
mod tokenizer;

use std::collections::BTreeSet;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use lora::{adapter_forward, adapter_scale, Adapter, AdapterTarget};
pub use model::{Block, BlockAdapters, ForwardTrace, ModelConfig, Norm, ParamGroup, Prompt, StagedModel, VideoInput};
pub use tokenizer::{split_pieces, Tokenizer, EOS, PAD, UNK};

use crate::codec::TemporalVocab;
use crate::error::{Error, Result};

/// How appended vocabulary rows are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingInit {
    /// Mean of the existing rows plus seeded Gaussian noise.
    MeanNoise { std: f64 },
}

/// Append `vocab.added_count()` rows to a `(base_size, D)` table.
pub fn extend_embeddings(base: &Array2<f64>, vocab: &TemporalVocab, init: EmbeddingInit, seed: u64) -> Result<Array2<f64>> {
    if base.nrows() != vocab.base_size() {
        return Err(Error::Shape(format!("table has {} rows, vocabulary base is {}", base.nrows(), vocab.base_size())));
    }
    let EmbeddingInit::MeanNoise { std } = init;
    let normal = Normal::new(0.0, std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mean = base.mean_axis(Axis(0)).ok_or_else(|| Error::EmptyInput("empty embedding table".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let added = Array2::from_shape_fn((vocab.added_count(), base.ncols()), |(_, j)| {
        let noise = if std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        mean[j] + noise
    });
    ndarray::concatenate(Axis(0), &[base.view(), added.view()]).map_err(|e| Error::Shape(e.to_string()))
}

/// A prompt and the answer ids the loss is computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub prompt: Prompt,
    pub answer: Vec<usize>,
}

impl TrainingExample {
    pub fn new(video: Arc<VideoInput>, before_video: Vec<usize>, after_video: Vec<usize>, answer: Vec<usize>) -> Self {
        Self { prompt: Prompt { video, before_video, after_video }, answer }
    }

    pub fn len(&self) -> usize {
        self.prompt.len() + self.answer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One flag per sequence position, set exactly on the answer tokens.
    pub fn loss_mask(&self) -> Vec<bool> {
        let p = self.prompt.len();
        (0..self.len()).map(|i| i >= p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over answer positions.
    #[default]
    Sum,
    Mean,
}

/// Cross-entropy of the answer tokens and its gradient w.r.t. the logits.
/// Row `i` of `logits` predicts the token at position `i + 1`.
pub fn loss_and_dlogits(logits: &Array2<f64>, example: &TrainingExample, reduction: Reduction) -> Result<(f64, Array2<f64>)> {
    if example.answer.is_empty() {
        return Err(Error::DegenerateExample("answer has no tokens".into()));
    }
    if logits.nrows() != example.len() {
        return Err(Error::Shape(format!("{} logit rows for a sequence of {}", logits.nrows(), example.len())));
    }
    let p = example.prompt.len();
    let weight = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / example.answer.len() as f64,
    };
    let mut total = 0.0;
    let mut d = Array2::zeros(logits.dim());
    for (t, &gold) in example.answer.iter().enumerate() {
        let row = logits.row(p + t - 1);
        if gold >= row.len() {
            return Err(Error::InvalidInput(format!("answer id {gold} outside vocabulary of {}", row.len())));
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[gold];
        let mut drow = d.row_mut(p + t - 1);
        for (j, g) in drow.iter_mut().enumerate() {
            *g = weight * (row[j] - log_z).exp();
        }
        drow[gold] -= weight;
    }
    let loss = total * weight;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, d))
}

/// Negative log-likelihood of the answer.
pub fn loss(logits: &Array2<f64>, example: &TrainingExample, reduction: Reduction) -> Result<f64> {
    Ok(loss_and_dlogits(logits, example, reduction)?.0)
}

/// Which embedding rows stage 2 and later may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedUpdate {
    All,
    /// Only rows appended by the vocabulary extension.
    #[default]
    TemporalOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainableMask {
    pub groups: BTreeSet<ParamGroup>,
    pub embed_update: EmbedUpdate,
}

impl TrainableMask {
    pub fn contains(&self, group: ParamGroup) -> bool {
        self.groups.contains(&group)
    }
}

pub fn trainable_mask(stage: u8, embed_update: EmbedUpdate) -> Result<TrainableMask> {
    use ParamGroup::*;
    let groups: &[ParamGroup] = match stage {
        1 => &[Projector],
        2 => &[Projector, Embedding, Head],
        3 => &[Projector, Embedding, Head, Adapter],
        other => return Err(Error::UnknownStage(other)),
    };
    Ok(TrainableMask { groups: groups.iter().copied().collect(), embed_update })
}

/// Loss and gradient of one example, with frozen groups zeroed.
pub fn gradients(model: &StagedModel, example: &TrainingExample, mask: &TrainableMask, reduction: Reduction) -> Result<(f64, StagedModel)> {
    let (logits, trace) = model.forward_traced(&example.prompt, &example.answer)?;
    let (loss, dlogits) = loss_and_dlogits(&logits, example, reduction)?;
    let mut grad = model.zeros_like();
    model.backward(&trace, &dlogits, &mut grad);
    let base_rows = model.vocab.as_ref().map_or(model.vocab_size(), TemporalVocab::base_size);
    let dim = model.config.dim;
    grad.visit_mut(&mut |name, group, values| {
        if !mask.contains(group) {
            values.iter_mut().for_each(|v| *v = 0.0);
        } else if name == "embedding" && mask.embed_update == EmbedUpdate::TemporalOnly {
            values[..base_rows * dim].iter_mut().for_each(|v| *v = 0.0);
        }
    });
    Ok((loss, grad))
}

/// Greedy decoding. Stops after `max_len` tokens or at the end-of-sequence
/// token, which is not included in the output. Ties go to the lowest id.
pub fn generate(model: &StagedModel, prompt: &Prompt, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be at least 1".into()));
    }
    let mut out = Vec::new();
    while out.len() < max_len && prompt.len() + out.len() < model.config.max_positions {
        let (logits, _) = model.forward_traced(prompt, &out)?;
        let last = logits.row(logits.nrows() - 1);
        let mut best = 0;
        for (j, &v) in last.iter().enumerate() {
            if v > last[best] {
                best = j;
            }
        }
        if best == model.eos_id {
            break;
        }
        out.push(best);
    }
    Ok(out)
}
