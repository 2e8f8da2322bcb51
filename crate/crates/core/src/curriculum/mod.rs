//! Three-stage training over synthetic tasks.
//!
//! Stage 1 aligns the projectors with captioning only. Stage 2 introduces the
//! temporal tokens and trains their embeddings and the head on grounding
//! tasks. Stage 3 attaches adapters and mixes in the remaining tasks.

mod corpus;
mod evaluate;
pub mod templates;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use corpus::{
    build_example, choice_question, parse_option_letter, task_samples, video_input, world_texts, ChoiceQuestion, Corpus, CorpusConfig,
    SyntheticVideo, TaskSample, ACTIONS, OPTION_LETTERS, SUBJECTS,
};
pub use evaluate::evaluate_model;
pub use templates::{instruction_template, Slots, TaskKind, TIMESTAMP_REQUEST};
pub use train::{
    mean_task_loss, run_curriculum, run_stage, temporal_exact_match, CurriculumLog, ExactMatch, LearningRates, Schedule, StageLog, StagePlan,
    StepLog,
};

use crate::error::{Error, Result};
use crate::lm::{EmbedUpdate, EmbeddingInit, ModelConfig, Reduction, StagedModel};

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub embed_init: EmbeddingInit,
    pub plans: Vec<StagePlan>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let model = ModelConfig { max_positions: 128, ..ModelConfig::default() };
        Self {
            seed: 7,
            corpus: CorpusConfig::default(),
            embed_init: EmbeddingInit::MeanNoise { std: model.new_token_noise },
            model,
            plans: default_plans(),
        }
    }
}

fn weights(pairs: &[(TaskKind, f64)]) -> BTreeMap<TaskKind, f64> {
    pairs.iter().copied().collect()
}

/// Desk-scale plans for the three stages.
pub fn default_plans() -> Vec<StagePlan> {
    use TaskKind::*;
    vec![
        StagePlan {
            stage: 1,
            tasks: weights(&[(Captioning, 1.0)]),
            steps: 60,
            batch_size: 8,
            learning_rates: LearningRates { projector: 0.05, embedding: 0.0, head: 0.0, adapter: 0.0 },
            schedule: Schedule::Constant,
            reduction: Reduction::Mean,
            embed_update: EmbedUpdate::TemporalOnly,
            seed: 11,
        },
        StagePlan {
            stage: 2,
            tasks: weights(&[(SentenceGrounding, 1.0), (DenseCaptioning, 1.0), (TemporalReferring, 1.0)]),
            steps: 4000,
            batch_size: 8,
            learning_rates: LearningRates { projector: 0.05, embedding: 1.0, head: 1.0, adapter: 0.0 },
            schedule: Schedule::Constant,
            reduction: Reduction::Mean,
            embed_update: EmbedUpdate::TemporalOnly,
            seed: 12,
        },
        StagePlan {
            stage: 3,
            tasks: weights(&[
                (Captioning, 1.0),
                (SentenceGrounding, 3.0),
                (DenseCaptioning, 1.0),
                (TemporalReferring, 1.0),
                (GroundedQa, 1.0),
                (VideoQa, 1.0),
            ]),
            steps: 150,
            batch_size: 8,
            learning_rates: LearningRates { projector: 0.02, embedding: 1.0, head: 1.0, adapter: 0.02 },
            schedule: Schedule::Cosine,
            reduction: Reduction::Mean,
            embed_update: EmbedUpdate::TemporalOnly,
            seed: 13,
        },
    ]
}

impl TrainConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.corpus.encoder.validate()?;
        if self.corpus.encoder.model_dim != self.model.dim {
            return Err(Error::Config("encoder model_dim must equal the decoder width".into()));
        }
        for p in &self.plans {
            p.validate()?;
        }
        Ok(())
    }

    /// Plans restricted to `stages` (e.g. `[1, 3]` for the ablation without
    /// temporal-token alignment).
    pub fn plans_for(&self, stages: &[u8]) -> Result<Vec<StagePlan>> {
        stages
            .iter()
            .map(|&s| self.plans.iter().find(|p| p.stage == s).cloned().ok_or(Error::UnknownStage(s)))
            .collect()
    }

    /// Fresh model sized for the corpus vocabulary.
    pub fn init_model(&self, corpus: &Corpus) -> Result<StagedModel> {
        let tok = &corpus.tokenizer;
        StagedModel::new(self.model.clone(), self.corpus.encoder.clone(), tok.size(), tok.eos_id(), self.seed)
    }
}

/// Build the corpus, initialise a model and run the selected stages.
pub fn train(
    cfg: &TrainConfig,
    stages: &[u8],
    on_stage: impl FnMut(&StagedModel, &StageLog) -> Result<()>,
) -> Result<(StagedModel, Corpus, CurriculumLog)> {
    cfg.validate()?;
    let corpus = Corpus::build(&cfg.corpus)?;
    let mut model = cfg.init_model(&corpus)?;
    let plans = cfg.plans_for(stages)?;
    let log = run_curriculum(&mut model, &corpus, &plans, cfg.embed_init, cfg.seed, on_stage)?;
    Ok((model, corpus, log))
}

#[cfg(test)]
mod tests;
