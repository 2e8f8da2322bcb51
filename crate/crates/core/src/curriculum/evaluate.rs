use rayon::prelude::*;

use super::{parse_option_letter, Corpus, TaskKind, TaskSample, OPTION_LETTERS, TIMESTAMP_REQUEST};
use crate::codec::{parse_grounded_text, GroundedEvent, TemporalVocab};
use crate::error::{Error, Result};
use crate::lm::{generate, StagedModel};
use crate::metrics::{evaluate_dense, evaluate_gqa, evaluate_grounding, CaptionScorer, DenseRecord, EvalTask, Evaluation, GqaFileRecord, GroundingRecord};

/// Longest generated reply during evaluation.
const MAX_REPLY: usize = 64;

fn reply(model: &StagedModel, corpus: &Corpus, sample: &TaskSample, vocab: &TemporalVocab) -> Result<String> {
    let ex = corpus.example(sample, Some(vocab))?;
    let ids = generate(model, &ex.prompt, MAX_REPLY)?;
    Ok(corpus.tokenizer.decode(&ids, Some(vocab)))
}

/// First span in `text`, or `None` when there is none.
fn first_span(text: &str, vocab: &TemporalVocab, duration: f64) -> Option<(f64, f64)> {
    parse_grounded_text(text, vocab, duration).ok().map(|p| (p.events[0].start, p.events[0].end))
}

/// Generate answers for every sample of the task and score them against
/// the corpus ground truth. Replies without a readable span count as the
/// point `[0, 0]`.
pub fn evaluate_model(model: &StagedModel, corpus: &Corpus, task: EvalTask, scorer: &dyn CaptionScorer) -> Result<Evaluation> {
    let vocab = model.vocab.as_ref().ok_or_else(|| Error::Config("model has no temporal tokens; train stage 2 first".into()))?;
    let mut eval = match task {
        EvalTask::Grounding => {
            let samples: Vec<&TaskSample> = corpus.samples_of(TaskKind::SentenceGrounding).collect();
            let rows = samples
                .par_iter()
                .map(|s| -> Result<(GroundingRecord, GroundingRecord, bool)> {
                    let v = &corpus.videos[s.video];
                    let ev = &v.events[s.event.expect("grounding samples name an event")];
                    let span = first_span(&reply(model, corpus, s, vocab)?, vocab, v.duration);
                    let (a, b) = span.unwrap_or((0.0, 0.0));
                    Ok((
                        GroundingRecord { id: v.id.clone(), start: a, end: b },
                        GroundingRecord { id: v.id.clone(), start: ev.start, end: ev.end },
                        span.is_none(),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let (preds, gts): (Vec<_>, Vec<_>) = rows.iter().map(|r| (r.0.clone(), r.1.clone())).unzip();
            let mut e = evaluate_grounding(&preds, &gts)?;
            note_unparsed(&mut e, rows.iter().filter(|r| r.2).count());
            e
        }
        EvalTask::Gqa => {
            let samples: Vec<&TaskSample> = corpus.samples_of(TaskKind::GroundedQa).collect();
            let rows = samples
                .chunks(2)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|pair| -> Result<(GqaFileRecord, GqaFileRecord, bool)> {
                    let (first, second) = (pair[0], pair[1]);
                    let v = &corpus.videos[first.video];
                    let ev = &v.events[first.event.expect("QA samples name an event")];
                    let answer = reply(model, corpus, first, vocab)?;
                    let letter = parse_option_letter(&answer).map_or(String::new(), |k| OPTION_LETTERS[k].to_string());
                    let follow_up = TaskSample { instruction: format!("{} {answer} {TIMESTAMP_REQUEST}", first.instruction), ..second.clone() };
                    let span = first_span(&reply(model, corpus, &follow_up, vocab)?, vocab, v.duration);
                    let (a, b) = span.unwrap_or((0.0, 0.0));
                    let gold = parse_option_letter(&first.target).map(|k| OPTION_LETTERS[k].to_string()).unwrap_or_default();
                    Ok((
                        GqaFileRecord { id: v.id.clone(), answer: letter, start: Some(a), end: Some(b), intervals: None },
                        GqaFileRecord { id: v.id.clone(), answer: gold, start: Some(ev.start), end: Some(ev.end), intervals: None },
                        span.is_none(),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let (preds, gts): (Vec<_>, Vec<_>) = rows.iter().map(|r| (r.0.clone(), r.1.clone())).unzip();
            let mut e = evaluate_gqa(&preds, &gts)?;
            note_unparsed(&mut e, rows.iter().filter(|r| r.2).count());
            e
        }
        EvalTask::DenseCaptioning => {
            let samples: Vec<&TaskSample> = corpus.samples_of(TaskKind::DenseCaptioning).collect();
            let rows = samples
                .par_iter()
                .map(|s| -> Result<(DenseRecord, DenseRecord)> {
                    let v = &corpus.videos[s.video];
                    let events: Vec<GroundedEvent> =
                        parse_grounded_text(&reply(model, corpus, s, vocab)?, vocab, v.duration).map(|p| p.events).unwrap_or_default();
                    Ok((DenseRecord { id: v.id.clone(), events }, DenseRecord { id: v.id.clone(), events: v.events.clone() }))
                })
                .collect::<Result<Vec<_>>>()?;
            let (preds, gts): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            evaluate_dense(&preds, &gts, scorer)?
        }
    };
    eval.notes.push(format!("{} synthetic videos, greedy decoding", corpus.videos.len()));
    Ok(eval)
}

fn note_unparsed(e: &mut Evaluation, n: usize) {
    if n > 0 {
        e.notes.push(format!("{n} replies had no readable span and were scored as [0, 0]"));
    }
}
