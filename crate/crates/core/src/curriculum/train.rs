use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::templates::TaskKind;
use crate::error::{Error, Result};
use crate::lm::{generate, gradients, loss, trainable_mask, EmbedUpdate, EmbeddingInit, ParamGroup, Reduction, StagedModel, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub projector: f64,
    pub embedding: f64,
    pub head: f64,
    pub adapter: f64,
}

impl LearningRates {
    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Projector => self.projector,
            ParamGroup::Embedding => self.embedding,
            ParamGroup::Head => self.head,
            ParamGroup::Adapter => self.adapter,
            ParamGroup::Backbone => 0.0,
        }
    }
}

/// Learning-rate multiplier over the steps of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine from 1 down to 0 over the stage.
    Cosine,
}

impl Schedule {
    pub fn factor(self, step: usize, steps: usize) -> f64 {
        match self {
            Schedule::Constant => 1.0,
            Schedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / steps.max(1) as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    /// Sampling weight per task.
    pub tasks: BTreeMap<TaskKind, f64>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rates: LearningRates,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default)]
    pub embed_update: EmbedUpdate,
    pub seed: u64,
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        trainable_mask(self.stage, self.embed_update)?;
        if self.tasks.values().any(|&w| !w.is_finite() || w < 0.0) || self.tasks.values().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("stage {} task weights must be non-negative with a positive sum", self.stage)));
        }
        if self.stage == 1 && self.tasks.iter().any(|(t, &w)| w > 0.0 && *t != TaskKind::Captioning) {
            return Err(Error::Config("stage 1 trains on captioning only".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        for g in [ParamGroup::Projector, ParamGroup::Embedding, ParamGroup::Head, ParamGroup::Adapter] {
            let lr = self.learning_rates.get(g);
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::Config(format!("learning rate for {g:?} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub stage: u8,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: u8,
    pub reduction: Reduction,
    pub embed_update: EmbedUpdate,
    pub vocab_size: usize,
    pub adapter_parameters: usize,
    pub steps: Vec<StepLog>,
}

impl StageLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumLog {
    pub stages: Vec<StageLog>,
    /// Stage 2 was left out, so the temporal tokens first appear in stage 3.
    pub alignment_skipped: bool,
}

impl CurriculumLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepLog> {
        self.stages.iter().flat_map(|s| s.steps.iter())
    }
}

fn stage_examples(corpus: &Corpus, model: &StagedModel, plan: &StagePlan) -> Result<Vec<(TaskKind, Vec<TrainingExample>)>> {
    let mut out = Vec::new();
    for (&task, &w) in &plan.tasks {
        if w <= 0.0 {
            continue;
        }
        let examples = corpus.samples_of(task).map(|s| corpus.example(s, model.vocab.as_ref())).collect::<Result<Vec<_>>>()?;
        if examples.is_empty() {
            return Err(Error::Config(format!("corpus has no {} samples", task.name())));
        }
        out.push((task, examples));
    }
    Ok(out)
}

/// Apply `param -= lr * scale * grad` to every trainable group.
fn apply_update(model: &mut StagedModel, grad: &StagedModel, plan: &StagePlan, scale: f64) {
    let mask = trainable_mask(plan.stage, plan.embed_update).expect("validated plan");
    let mut grads: Vec<Vec<f64>> = Vec::new();
    grad.visit(&mut |_, group, g| grads.push(if mask.contains(group) { g.to_vec() } else { Vec::new() }));
    let mut i = 0;
    model.visit_mut(&mut |_, group, values| {
        let g = &grads[i];
        i += 1;
        if !mask.contains(group) {
            return;
        }
        let lr = plan.learning_rates.get(group) * scale;
        for (v, d) in values.iter_mut().zip(g) {
            *v -= lr * d;
        }
    });
}

fn add_into(acc: &mut StagedModel, g: &StagedModel) {
    let mut grads: Vec<Vec<f64>> = Vec::new();
    g.visit(&mut |_, _, v| grads.push(v.to_vec()));
    let mut i = 0;
    acc.visit_mut(&mut |_, _, values| {
        for (a, b) in values.iter_mut().zip(&grads[i]) {
            *a += b;
        }
        i += 1;
    });
}

/// Gradient descent on batches sampled from `plan.tasks`, restricted to the
/// stage's trainable groups. Logs the batch-mean loss of every step.
pub fn run_stage(model: &mut StagedModel, corpus: &Corpus, plan: &StagePlan) -> Result<StageLog> {
    plan.validate()?;
    if plan.stage >= 2 && model.vocab.is_none() {
        return Err(Error::Config(format!("stage {} needs the temporal tokens; extend the vocabulary first", plan.stage)));
    }
    if plan.stage == 3 && model.adapters.is_none() {
        return Err(Error::Config("stage 3 needs adapters attached".into()));
    }
    model.stage = plan.stage;
    let pools = stage_examples(corpus, model, plan)?;
    let weights: Vec<f64> = pools.iter().map(|(t, _)| plan.tasks[t]).collect();
    let pick_task = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let mask = trainable_mask(plan.stage, plan.embed_update)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut steps = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        let batch: Vec<&TrainingExample> = (0..plan.batch_size)
            .map(|_| {
                let pool = &pools[pick_task.sample(&mut rng)].1;
                &pool[rng.random_range(0..pool.len())]
            })
            .collect();
        let results = batch.par_iter().map(|ex| gradients(model, ex, &mask, plan.reduction)).collect::<Vec<_>>();
        let mut total = 0.0;
        let mut acc: Option<StagedModel> = None;
        for r in results {
            let (loss, g) = r.map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence { stage: plan.stage, step, loss: f64::NAN },
                other => other,
            })?;
            total += loss;
            match &mut acc {
                None => acc = Some(g),
                Some(a) => add_into(a, &g),
            }
        }
        let loss = total / plan.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { stage: plan.stage, step, loss });
        }
        let scale = plan.schedule.factor(step, plan.steps) / plan.batch_size as f64;
        apply_update(model, &acc.expect("batch is non-empty"), plan, scale);
        steps.push(StepLog { step, stage: plan.stage, loss });
    }
    Ok(StageLog {
        stage: plan.stage,
        reduction: plan.reduction,
        embed_update: plan.embed_update,
        vocab_size: model.vocab_size(),
        adapter_parameters: model.adapter_parameter_count(),
        steps,
    })
}

/// Run plans in order. The vocabulary is extended once, before the first
/// stage that needs temporal tokens, and adapters are attached before stage 3.
pub fn run_curriculum(
    model: &mut StagedModel,
    corpus: &Corpus,
    plans: &[StagePlan],
    init: EmbeddingInit,
    seed: u64,
    mut on_stage: impl FnMut(&StagedModel, &StageLog) -> Result<()>,
) -> Result<CurriculumLog> {
    if plans.is_empty() {
        return Err(Error::Config("no stages to run".into()));
    }
    if plans.windows(2).any(|w| w[0].stage >= w[1].stage) || plans.iter().any(|p| p.stage < model.stage) {
        return Err(Error::Config("stages must run in increasing order".into()));
    }
    let stages: Vec<u8> = plans.iter().map(|p| p.stage).collect();
    let alignment_skipped = stages.contains(&3) && !stages.contains(&2) && model.vocab.is_none();
    let mut log = CurriculumLog { stages: Vec::new(), alignment_skipped };
    for plan in plans {
        if plan.stage >= 2 && model.vocab.is_none() {
            model.extend_vocab(corpus.vocab.clone(), init, seed ^ 0x5eed_0002)?;
        }
        if plan.stage == 3 && model.adapters.is_none() {
            model.attach_adapters(seed ^ 0x5eed_0003)?;
        }
        let stage_log = run_stage(model, corpus, plan)?;
        on_stage(model, &stage_log)?;
        log.stages.push(stage_log);
    }
    Ok(log)
}

/// Greedy-decoding accuracy on the temporal tokens of a task's samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMatch {
    pub items: usize,
    /// Items whose temporal tokens all match.
    pub exact_items: usize,
    pub matched_tokens: usize,
    pub total_tokens: usize,
}

impl ExactMatch {
    /// Fraction of gold temporal tokens reproduced at the same position.
    pub fn token_rate(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.matched_tokens as f64 / self.total_tokens as f64
        }
    }

    pub fn item_rate(&self) -> f64 {
        if self.items == 0 {
            0.0
        } else {
            self.exact_items as f64 / self.items as f64
        }
    }
}

pub fn temporal_exact_match(model: &StagedModel, corpus: &Corpus, task: TaskKind) -> Result<ExactMatch> {
    let vocab = model.vocab.as_ref().ok_or_else(|| Error::Config("model has no temporal tokens".into()))?;
    let samples: Vec<_> = corpus.samples_of(task).collect();
    let per_item = samples
        .par_iter()
        .map(|s| -> Result<(usize, usize)> {
            let ex = corpus.example(s, Some(vocab))?;
            let gold: Vec<usize> = ex.answer.iter().copied().filter(|&id| vocab.is_temporal(id)).collect();
            let out = generate(model, &ex.prompt, ex.answer.len() + 2)?;
            let pred: Vec<usize> = out.into_iter().filter(|&id| vocab.is_temporal(id)).collect();
            let matched = gold.iter().zip(&pred).filter(|(a, b)| a == b).count();
            Ok((matched, gold.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactMatch {
        items: per_item.len(),
        exact_items: per_item.iter().filter(|(m, t)| m == t).count(),
        matched_tokens: per_item.iter().map(|p| p.0).sum(),
        total_tokens: per_item.iter().map(|p| p.1).sum(),
    })
}

/// Mean loss over every sample of `task`.
pub fn mean_task_loss(model: &StagedModel, corpus: &Corpus, task: TaskKind, reduction: Reduction) -> Result<f64> {
    let losses = corpus
        .samples_of(task)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| {
            let ex = corpus.example(s, model.vocab.as_ref())?;
            let (logits, _) = model.forward_traced(&ex.prompt, &ex.answer)?;
            loss(&logits, &ex, reduction)
        })
        .collect::<Result<Vec<_>>>()?;
    if losses.is_empty() {
        return Err(Error::EmptyInput(format!("no {} samples", task.name())));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
