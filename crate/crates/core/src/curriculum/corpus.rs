//! Synthetic videos and the task samples built from them.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::templates::{self, instruction_template, Slots, TaskKind, TIMESTAMP_REQUEST};
use crate::codec::{render_grounded_text, render_span, vocab_layout, GroundedEvent, TemporalVocab};
use crate::encoder::{pool_segment, synth_features, EncoderConfig, SynthParams};
use crate::error::{Error, Result};
use crate::lm::{Tokenizer, TrainingExample, VideoInput};

pub const SUBJECTS: &[&str] = &["a man", "a woman", "a child", "a dog", "a chef", "the girl", "an old man", "a baby"];

pub const ACTIONS: &[&str] = &[
    "opens the door",
    "throws a ball",
    "is crying",
    "picks up a cup",
    "rides a bike",
    "plays the guitar",
    "reads a book",
    "cuts the bread",
    "waves to the camera",
    "sits on the sofa",
    "jumps into the pool",
    "washes the dishes",
];

pub const OPTION_LETTERS: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub id: String,
    pub seed: u64,
    pub duration: f64,
    pub events: Vec<GroundedEvent>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl SyntheticVideo {
    /// 1 to 4 disjoint events covering most of the video, duration in
    /// [30, 300] s. Subjects and actions are distinct within a video.
    pub fn generate(id: impl Into<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let duration = round2(rng.random_range(30.0..=300.0));
        let n = rng.random_range(1..=4);
        let mut subjects = SUBJECTS.to_vec();
        subjects.shuffle(&mut rng);
        let mut actions = ACTIONS.to_vec();
        actions.shuffle(&mut rng);
        // events tile the video, each trimmed by a small random margin
        let mut bounds: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..=duration)).collect();
        bounds.push(0.0);
        bounds.push(duration);
        bounds.sort_by(f64::total_cmp);
        let events = (0..n)
            .map(|i| {
                let (lo, hi) = (bounds[i], bounds[i + 1]);
                let width = hi - lo;
                let start = round2(lo + rng.random_range(0.0..=0.1) * width);
                let end = round2(hi - rng.random_range(0.0..=0.1) * width).max(start).min(duration);
                GroundedEvent::new(start, end, format!("{} {}", subjects[i], actions[i]))
            })
            .collect();
        Self { id: id.into(), seed, duration, events }
    }

    fn subject_action(&self, event: usize) -> (&str, &str) {
        let caption = &self.events[event].caption;
        SUBJECTS
            .iter()
            .filter_map(|s| caption.strip_prefix(s).map(|rest| (*s, rest.trim())))
            .max_by_key(|(s, _)| s.len())
            .unwrap_or(("", caption.as_str()))
    }
}

/// One instruction/response pair over a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub video: usize,
    pub task: TaskKind,
    pub instruction: String,
    pub target: String,
    /// Event the sample is about, for single-event tasks.
    pub event: Option<usize>,
}

/// A multiple-choice question about one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceQuestion {
    pub question: String,
    pub options: Vec<String>,
    pub correct: usize,
    pub event: usize,
}

impl ChoiceQuestion {
    /// "question Options: (A) x. (B) y. ..."
    pub fn round_one(&self) -> String {
        let opts: Vec<String> = self.options.iter().zip(OPTION_LETTERS).map(|(o, l)| format!("({l}) {o}.")).collect();
        format!("{} Options: {}", self.question, opts.join(" "))
    }

    pub fn answer_line(&self, choice: usize) -> String {
        format!("Answer: {}.", OPTION_LETTERS[choice])
    }
}

pub fn choice_question(video: &SyntheticVideo, event: usize, rng: &mut impl Rng) -> ChoiceQuestion {
    let (subject, action) = video.subject_action(event);
    let mut distractors: Vec<&str> = ACTIONS.iter().copied().filter(|a| *a != action).collect();
    distractors.shuffle(rng);
    let mut options: Vec<String> = distractors[..4].iter().map(|s| s.to_string()).collect();
    let correct = rng.random_range(0..=4);
    options.insert(correct, action.to_string());
    ChoiceQuestion { question: format!("What does {subject} do in the video?"), options, correct, event }
}

/// Read an option letter from text such as "answer: c.".
pub fn parse_option_letter(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    let tail = lower.split("answer").nth(1).unwrap_or(&lower);
    tail.split(|c: char| !c.is_ascii_alphabetic())
        .find(|w| w.len() == 1)
        .and_then(|w| OPTION_LETTERS.iter().position(|l| l.eq_ignore_ascii_case(w)))
}

/// Every fixed string the synthetic tasks can produce, for building the
/// tokenizer before any sample exists.
pub fn world_texts() -> Vec<String> {
    let mut texts: Vec<String> = Vec::new();
    for task in TaskKind::ALL {
        if let Ok(list) = templates::templates(task) {
            texts.extend(list.iter().map(|s| s.to_string()));
        }
    }
    texts.extend(SUBJECTS.iter().chain(ACTIONS).map(|s| s.to_string()));
    texts.extend(OPTION_LETTERS.iter().map(|s| s.to_string()));
    texts.push(TIMESTAMP_REQUEST.to_string());
    texts.push("From to , . Answer: Options: ( ) What does do in the video?".to_string());
    texts
}

/// Build the samples of one task for one video.
pub fn task_samples(index: usize, video: &SyntheticVideo, task: TaskKind, vocab: &TemporalVocab, rng: &mut impl Rng) -> Result<Vec<TaskSample>> {
    let l = video.duration;
    let event = rng.random_range(0..video.events.len());
    let ev = &video.events[event];
    let sample = |instruction: String, target: String, event: Option<usize>| TaskSample { video: index, task, instruction, target, event };
    Ok(match task {
        TaskKind::Captioning => {
            let caption = video.events.iter().map(|e| format!("{}.", e.caption)).collect::<Vec<_>>().join(" ");
            vec![sample(instruction_template(task, &Slots::default(), rng)?, caption, None)]
        }
        TaskKind::SentenceGrounding => {
            let slots = Slots { query: Some(&ev.caption), ..Default::default() };
            vec![sample(instruction_template(task, &slots, rng)?, format!("{}.", render_span(ev.start, ev.end, l, vocab)?), Some(event))]
        }
        TaskKind::DenseCaptioning => {
            vec![sample(instruction_template(task, &Slots::default(), rng)?, render_grounded_text(&video.events, l, vocab)?, None)]
        }
        TaskKind::TemporalReferring => {
            // a random sub-span of the event, so neighbouring tokens share captions
            let m = vocab.chunks();
            let lo = crate::codec::timestamp_to_token(ev.start, l, m)?;
            let hi = crate::codec::timestamp_to_token(ev.end, l, m)?;
            let (mut a, mut b) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            let (a, b) = (format!("<{a}>"), format!("<{b}>"));
            let slots = Slots { start: Some(&a), end: Some(&b), ..Default::default() };
            vec![sample(instruction_template(task, &slots, rng)?, format!("{}.", ev.caption), Some(event))]
        }
        TaskKind::GroundedQa => {
            let q = choice_question(video, event, rng);
            let round_one = q.round_one();
            let answer = q.answer_line(q.correct);
            vec![
                sample(round_one.clone(), answer.clone(), Some(event)),
                sample(
                    format!("{round_one} {answer} {TIMESTAMP_REQUEST}"),
                    format!("{}.", render_span(ev.start, ev.end, l, vocab)?),
                    Some(event),
                ),
            ]
        }
        TaskKind::VideoQa => {
            let (subject, action) = video.subject_action(event);
            vec![sample(format!("What does {subject} do in the video?"), format!("{action}."), Some(event))]
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub videos: usize,
    /// Number of chunks M; temporal tokens are `<0>..<M>`.
    pub chunks: usize,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub synth: SynthParams,
    /// Temporal-referring samples per video.
    #[serde(default = "default_referring")]
    pub referring_per_video: usize,
}

fn default_referring() -> usize {
    1
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { seed: 7, videos: 16, chunks: 120, encoder: EncoderConfig::toy(), synth: SynthParams::default(), referring_per_video: 24 }
    }
}

/// Videos, their pooled features, and samples of every task.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub videos: Vec<SyntheticVideo>,
    pub inputs: Vec<Arc<VideoInput>>,
    pub samples: Vec<TaskSample>,
    pub tokenizer: Tokenizer,
    pub vocab: TemporalVocab,
}

/// Pooled encoder features of a synthetic video.
pub fn video_input(video: &SyntheticVideo, encoder: &EncoderConfig, synth: SynthParams) -> Result<VideoInput> {
    let segments = synth_features(video.seed, encoder, &video.events, video.duration, synth)?;
    let pooled = segments.iter().map(|s| pool_segment(s, encoder)).collect::<Result<Vec<_>>>()?;
    VideoInput::from_pooled(&pooled)
}

impl Corpus {
    pub fn build(cfg: &CorpusConfig) -> Result<Self> {
        if cfg.videos == 0 {
            return Err(Error::Config("corpus needs at least one video".into()));
        }
        let tokenizer = Tokenizer::from_corpus(world_texts().iter().map(String::as_str));
        let vocab = vocab_layout(tokenizer.size(), cfg.chunks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let videos: Vec<SyntheticVideo> = (0..cfg.videos).map(|i| SyntheticVideo::generate(format!("synth-{i:04}"), rng.random())).collect();
        let inputs = videos
            .iter()
            .map(|v| video_input(v, &cfg.encoder, cfg.synth).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let mut samples = Vec::new();
        for (i, v) in videos.iter().enumerate() {
            for task in TaskKind::ALL {
                let repeats = if task == TaskKind::TemporalReferring { cfg.referring_per_video } else { 1 };
                for _ in 0..repeats {
                    samples.extend(task_samples(i, v, task, &vocab, &mut rng)?);
                }
            }
        }
        Ok(Self { videos, inputs, samples, tokenizer, vocab })
    }

    pub fn samples_of(&self, task: TaskKind) -> impl Iterator<Item = &TaskSample> {
        self.samples.iter().filter(move |s| s.task == task)
    }

    /// Prompt and answer ids of a sample. Without `vocab` (before the
    /// temporal tokens exist) the video markers are omitted.
    pub fn example(&self, sample: &TaskSample, vocab: Option<&TemporalVocab>) -> Result<TrainingExample> {
        build_example(sample, &self.tokenizer, vocab, self.inputs[sample.video].clone())
    }
}

/// `<video> F_vid </video> [<grounded>] instruction` followed by the target
/// and end-of-sequence.
pub fn build_example(sample: &TaskSample, tokenizer: &Tokenizer, vocab: Option<&TemporalVocab>, video: Arc<VideoInput>) -> Result<TrainingExample> {
    let unk = tokenizer.unk_id();
    let instruction = tokenizer.encode(&sample.instruction, vocab);
    let mut answer = tokenizer.encode(&sample.target, vocab);
    if answer.is_empty() {
        return Err(Error::DegenerateExample("empty target".into()));
    }
    if instruction.contains(&unk) || answer.contains(&unk) {
        return Err(Error::InvalidInput(format!(
            "sample for video {} has tokens outside the vocabulary: {:?} / {:?}",
            sample.video, sample.instruction, sample.target
        )));
    }
    answer.push(tokenizer.eos_id());
    let (before, mut after) = match vocab {
        Some(v) => {
            let mut after = vec![v.video_end_id()];
            if answer.iter().any(|&id| v.is_temporal(id)) {
                after.push(v.grounded_id());
            }
            (vec![v.video_start_id()], after)
        }
        None => (Vec::new(), Vec::new()),
    };
    after.extend(instruction);
    Ok(TrainingExample::new(video, before, after, answer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_grounded_text;

    fn corpus() -> Corpus {
        Corpus::build(&CorpusConfig { videos: 4, ..Default::default() }).unwrap()
    }

    #[test]
    fn videos_follow_the_generator_contract() {
        for seed in 0..200 {
            let v = SyntheticVideo::generate("v", seed);
            assert!((30.0..=300.0).contains(&v.duration));
            assert!((1..=4).contains(&v.events.len()));
            for w in v.events.windows(2) {
                assert!(w[0].end <= w[1].start);
            }
            for e in &v.events {
                e.validate(v.duration).unwrap();
            }
        }
    }

    #[test]
    fn grounded_marker_follows_target() {
        let c = corpus();
        let v = &c.vocab;
        for s in &c.samples {
            let ex = c.example(s, Some(v)).unwrap();
            let grounded = ex.prompt.after_video.contains(&v.grounded_id());
            let expected = matches!(s.task, TaskKind::SentenceGrounding | TaskKind::DenseCaptioning)
                || (s.task == TaskKind::GroundedQa && s.instruction.contains(TIMESTAMP_REQUEST));
            assert_eq!(grounded, expected, "{:?}", s.task);
            assert_eq!(ex.loss_mask().iter().filter(|&&m| m).count(), ex.answer.len());
            assert_eq!(ex.prompt.before_video, vec![v.video_start_id()]);
        }
    }

    #[test]
    fn grounded_targets_round_trip() {
        let c = corpus();
        for s in c.samples_of(TaskKind::DenseCaptioning) {
            let video = &c.videos[s.video];
            let parsed = parse_grounded_text(&s.target, &c.vocab, video.duration).unwrap();
            assert_eq!(parsed.events.len(), video.events.len());
            let half = video.duration / (2.0 * c.vocab.chunks() as f64) + 1e-9;
            for (p, e) in parsed.events.iter().zip(&video.events) {
                assert!((p.start - e.start).abs() <= half && (p.end - e.end).abs() <= half);
                assert_eq!(p.caption, e.caption);
            }
        }
    }

    #[test]
    fn stage_one_examples_have_no_markers() {
        let c = corpus();
        let s = c.samples_of(TaskKind::Captioning).next().unwrap();
        let ex = c.example(s, None).unwrap();
        assert!(ex.prompt.before_video.is_empty());
        // grounded targets need the temporal tokens
        let g = c.samples_of(TaskKind::SentenceGrounding).next().unwrap();
        assert!(matches!(c.example(g, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn option_letters() {
        assert_eq!(parse_option_letter("answer: c."), Some(2));
        assert_eq!(parse_option_letter("Answer: E"), Some(4));
        assert_eq!(parse_option_letter("no idea"), None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = SyntheticVideo::generate("v", 3);
        let q = choice_question(&v, 0, &mut rng);
        assert_eq!(q.options.len(), 5);
        assert!(v.events[0].caption.ends_with(&q.options[q.correct]));
    }
}
