//! Grounded multiple-choice QA from timestamped segment descriptions.
//!
//! A chat model picks one segment per video and writes a question with a
//! short answer. Distractors are answers to similar questions about other
//! videos whose answer similarity falls inside a band, so they are related
//! but not paraphrases. Each record is a two-round conversation: pick an
//! option, then give its time span.

mod clients;
mod prompt;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::timestamp_to_token;
use crate::curriculum::{ChoiceQuestion, TIMESTAMP_REQUEST};
use crate::error::{Error, Result};

pub use clients::{
    cosine, interpolate, ChatClient, EmbeddingClient, Endpoint, HashEmbedder, HttpChatClient, HttpEmbeddingClient, StubChat, StubMode,
};
pub use prompt::{build_prompt, parse_generation, user_message, ChatMessage, Generation, Role, DEMO_RESPONSE, DEMO_USER, SYSTEM_PROMPT};

/// Longest answer the generator may return, in words.
pub const MAX_ANSWER_WORDS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub video_id: String,
    pub duration: f64,
    pub segments: Vec<Segment>,
}

impl SegmentAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Schema(format!("{}: duration must be positive, got {}", self.video_id, self.duration)));
        }
        if self.segments.is_empty() {
            return Err(Error::Schema(format!("{}: no segments", self.video_id)));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite() && 0.0 <= s.start && s.start <= s.end && s.end <= self.duration) {
                return Err(Error::Schema(format!("{}: segment {} [{}, {}] outside [0, {}]", self.video_id, i + 1, s.start, s.end, self.duration)));
            }
        }
        Ok(())
    }
}

/// Annotations over the synthetic world, one per video.
pub fn synthetic_annotations(count: usize, seed: u64) -> Vec<SegmentAnnotation> {
    (0..count)
        .map(|i| {
            let v = crate::curriculum::SyntheticVideo::generate(format!("synth{i:04}"), seed.wrapping_add(i as u64));
            SegmentAnnotation {
                video_id: v.id,
                duration: v.duration,
                segments: v.events.into_iter().map(|e| Segment { start: e.start, end: e.end, description: format!("{}.", e.caption) }).collect(),
            }
        })
        .collect()
}

/// Strict reader: every line must parse and validate.
pub fn read_annotations(path: &Path) -> Result<Vec<SegmentAnnotation>> {
    let anns: Vec<SegmentAnnotation> = crate::metrics::read_jsonl(path)?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

/// A question already in the pool, with its question embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorQa {
    pub video_id: String,
    pub question: String,
    pub answer: String,
    pub embedding: Vec<f64>,
}

impl PriorQa {
    pub fn new(video_id: &str, question: &str, answer: &str, embed: &dyn EmbeddingClient) -> Result<Self> {
        Ok(Self { video_id: video_id.into(), question: question.into(), answer: answer.into(), embedding: embed.embed(question)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub question: String,
    pub answer: String,
    pub similarity: f64,
}

/// Up to `k` pool entries by descending question similarity; ties keep
/// pool order.
pub fn retrieve_candidates(question: &str, pool: &[PriorQa], embed: &dyn EmbeddingClient, k: usize) -> Result<Vec<Candidate>> {
    let q = embed.embed(question)?;
    let mut ranked: Vec<Candidate> = pool
        .iter()
        .map(|p| Candidate { question: p.question.clone(), answer: p.answer.clone(), similarity: cosine(&q, &p.embedding) })
        .collect();
    ranked.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub text: String,
    pub similarity: f64,
}

/// Inclusive similarity band for distractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self { low: 0.2, high: 0.9 }
    }
}

impl Band {
    pub fn contains(&self, s: f64) -> bool {
        self.low <= s && s <= self.high
    }
}

fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches(['.', '!', '?']).to_lowercase()
}

/// Draw `n` distinct candidate answers whose similarity to `answer` lies
/// in `band`, uniformly without replacement.
pub fn sample_distractors(
    answer: &str,
    candidates: &[Candidate],
    embed: &dyn EmbeddingClient,
    band: Band,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Distractor>> {
    let a = embed.embed(answer)?;
    let mut seen = HashSet::from([normalize_answer(answer)]);
    let mut eligible = Vec::new();
    for c in candidates {
        if !seen.insert(normalize_answer(&c.answer)) {
            continue;
        }
        let s = cosine(&a, &embed.embed(&c.answer)?);
        if band.contains(s) {
            eligible.push(Distractor { text: c.answer.clone(), similarity: s });
        }
    }
    if eligible.len() < n {
        return Err(Error::InsufficientDistractors { found: eligible.len(), needed: n });
    }
    Ok(eligible.choose_multiple(rng, n).cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaProvenance {
    pub chat_model: String,
    pub embedding_model: String,
    pub seed: u64,
}

/// A validated generation with its distractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQa {
    pub video_id: String,
    pub duration: f64,
    /// 0-based index into the annotation's segments.
    pub segment: usize,
    pub start: f64,
    pub end: f64,
    pub question: String,
    pub answer: String,
    pub distractors: Vec<Distractor>,
    pub provenance: QaProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordProvenance {
    pub chat_model: String,
    pub embedding_model: String,
    pub seed: u64,
    pub chunks: usize,
    pub version: String,
}

/// One training conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub video_id: String,
    pub duration: f64,
    pub rounds: Vec<Round>,
    pub gold: Span,
    pub options: Vec<String>,
    pub correct: usize,
    /// Similarity of each option to the correct answer (1 for itself).
    pub option_similarity: Vec<f64>,
    pub provenance: RecordProvenance,
}

/// Shuffle the answer among the distractors and write both rounds, the
/// second with the span as temporal tokens over `chunks`.
pub fn assemble_record(qa: &GeneratedQa, chunks: usize, rng: &mut impl Rng) -> Result<QaRecord> {
    let mut options: Vec<(String, f64)> = std::iter::once((qa.answer.clone(), 1.0))
        .chain(qa.distractors.iter().map(|d| (d.text.clone(), d.similarity)))
        .collect();
    options.shuffle(rng);
    let correct = options.iter().position(|(o, _)| *o == qa.answer).expect("answer is among the options");
    let choice = ChoiceQuestion {
        question: qa.question.clone(),
        options: options.iter().map(|o| o.0.clone()).collect(),
        correct,
        event: qa.segment,
    };
    let a = timestamp_to_token(qa.start, qa.duration, chunks)?;
    let b = timestamp_to_token(qa.end, qa.duration, chunks)?;
    Ok(QaRecord {
        video_id: qa.video_id.clone(),
        duration: qa.duration,
        rounds: vec![
            Round { user: choice.round_one(), assistant: choice.answer_line(correct) },
            Round { user: TIMESTAMP_REQUEST.to_string(), assistant: format!("From <{a}> to <{b}>") },
        ],
        gold: Span { start: qa.start, end: qa.end },
        option_similarity: options.iter().map(|o| o.1).collect(),
        options: choice.options,
        correct,
        provenance: RecordProvenance {
            chat_model: qa.provenance.chat_model.clone(),
            embedding_model: qa.provenance.embedding_model.clone(),
            seed: qa.provenance.seed,
            chunks,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Client selection. `stub` runs offline with [`StubChat`] and
/// [`HashEmbedder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    #[serde(default)]
    pub stub: bool,
    #[serde(default)]
    pub stub_mode: StubMode,
    #[serde(default)]
    pub chat: Option<Endpoint>,
    #[serde(default)]
    pub embedding: Option<Endpoint>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self { stub: true, stub_mode: StubMode::WellFormed, chat: None, embedding: None }
    }
}

impl ClientConfig {
    pub fn build(&self) -> Result<(Box<dyn ChatClient>, Box<dyn EmbeddingClient>)> {
        if self.stub {
            return Ok((Box::new(StubChat { mode: self.stub_mode }), Box::new(HashEmbedder::default())));
        }
        let chat = self.chat.as_ref().ok_or_else(|| Error::Config("clients.chat endpoint is required unless stub is set".into()))?;
        let emb = self.embedding.as_ref().ok_or_else(|| Error::Config("clients.embedding endpoint is required unless stub is set".into()))?;
        Ok((Box::new(HttpChatClient::new(chat)?), Box::new(HttpEmbeddingClient::new(emb)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub seed: u64,
    pub chunks: usize,
    /// Retrieved questions per record.
    pub candidates: usize,
    pub band: Band,
    pub distractors: usize,
    pub max_in_flight: usize,
    /// Attempts after the first failure.
    pub retries: u32,
    pub backoff_ms: u64,
    pub clients: ClientConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chunks: 300,
            candidates: 50,
            band: Band::default(),
            distractors: 4,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 200,
            clients: ClientConfig::default(),
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunks == 0 || self.candidates == 0 || self.max_in_flight == 0 {
            return Err(Error::Config("chunks, candidates and max_in_flight must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.band.low) || self.band.low > self.band.high {
            return Err(Error::Config(format!("bad similarity band [{}, {}]", self.band.low, self.band.high)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub video_id: String,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineStats {
    pub annotations: usize,
    pub generated: usize,
    pub emitted: usize,
    pub skipped: BTreeMap<String, usize>,
    pub skips: Vec<Skip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub records: Vec<QaRecord>,
    pub stats: PipelineStats,
}

fn skip_reason(e: &Error) -> Option<&'static str> {
    match e {
        Error::GenerationFormat(_) => Some("generation_format"),
        Error::InsufficientDistractors { .. } => Some("insufficient_distractors"),
        Error::Client(_) => Some("client"),
        Error::Schema(_) => Some("invalid_annotation"),
        _ => None,
    }
}

/// Log a per-record failure; anything else aborts the run.
fn skip(stats: &mut PipelineStats, video_id: &str, e: Error) -> Result<()> {
    let Some(reason) = skip_reason(&e) else { return Err(e) };
    *stats.skipped.entry(reason.to_string()).or_default() += 1;
    stats.skips.push(Skip { video_id: video_id.to_string(), reason: reason.to_string(), detail: e.to_string() });
    Ok(())
}

fn with_retries<T>(cfg: &DatagenConfig, mut f: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(Error::Client(_)) if attempt < cfg.retries => {
                std::thread::sleep(std::time::Duration::from_millis(cfg.backoff_ms << attempt.min(16)));
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Memoising, retrying wrapper so every text is embedded once per run.
struct CachedEmbedder<'a> {
    inner: &'a dyn EmbeddingClient,
    cfg: &'a DatagenConfig,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingClient for CachedEmbedder<'_> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = with_retries(self.cfg, || self.inner.embed(text))?;
        self.cache.lock().expect("cache lock").insert(text.to_string(), v.clone());
        Ok(v)
    }
}

fn generate_one(ann: &SegmentAnnotation, chat: &dyn ChatClient, cfg: &DatagenConfig) -> Result<Generation> {
    ann.validate()?;
    let messages = build_prompt(ann)?;
    let g = parse_generation(&with_retries(cfg, || chat.chat(&messages))?)?;
    if g.segment == 0 || g.segment > ann.segments.len() {
        return Err(Error::GenerationFormat(format!("chosen segment {} out of 1..={}", g.segment, ann.segments.len())));
    }
    let words = g.answer.split_whitespace().count();
    if words > MAX_ANSWER_WORDS {
        return Err(Error::GenerationFormat(format!("answer has {words} words")));
    }
    if normalize_answer(&g.question).contains(&normalize_answer(&g.answer)) {
        return Err(Error::GenerationFormat("answer appears in the question".into()));
    }
    let answer = g.answer.trim().trim_end_matches('.').to_string();
    Ok(Generation { answer, ..g })
}

/// Generate, retrieve, sample and assemble. Output order follows the
/// input; each record's randomness is a fixed stream of `cfg.seed`.
pub fn run_pipeline(
    annotations: &[SegmentAnnotation],
    chat: &dyn ChatClient,
    embed: &dyn EmbeddingClient,
    cfg: &DatagenConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let threads = rayon::ThreadPoolBuilder::new().num_threads(cfg.max_in_flight).build().map_err(|e| Error::Config(e.to_string()))?;
    let embed = CachedEmbedder { inner: embed, cfg, cache: Mutex::new(HashMap::new()) };
    let mut stats = PipelineStats { annotations: annotations.len(), ..Default::default() };

    let generations: Vec<Result<Generation>> = threads.install(|| annotations.par_iter().map(|a| generate_one(a, chat, cfg)).collect());
    let mut pool = Vec::new();
    let mut kept = Vec::new();
    for (i, g) in generations.into_iter().enumerate() {
        let ann = &annotations[i];
        match g.and_then(|g| PriorQa::new(&ann.video_id, &g.question, &g.answer, &embed).map(|p| (g, p))) {
            Ok((g, p)) => {
                pool.push(p);
                kept.push((i, g));
            }
            Err(e) => skip(&mut stats, &ann.video_id, e)?,
        }
    }
    stats.generated = kept.len();

    let provenance = QaProvenance { chat_model: chat.model().to_string(), embedding_model: embed.model().to_string(), seed: cfg.seed };
    let assembled: Vec<Result<QaRecord>> = threads.install(|| {
        kept.par_iter()
            .map(|(i, g)| {
                let ann = &annotations[*i];
                let others: Vec<PriorQa> = pool.iter().filter(|p| p.video_id != ann.video_id).cloned().collect();
                let cands = retrieve_candidates(&g.question, &others, &embed, cfg.candidates)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(*i as u64);
                let distractors = sample_distractors(&g.answer, &cands, &embed, cfg.band, cfg.distractors, &mut rng)?;
                let seg = &ann.segments[g.segment - 1];
                let qa = GeneratedQa {
                    video_id: ann.video_id.clone(),
                    duration: ann.duration,
                    segment: g.segment - 1,
                    start: seg.start,
                    end: seg.end,
                    question: g.question.clone(),
                    answer: g.answer.clone(),
                    distractors,
                    provenance: provenance.clone(),
                };
                assemble_record(&qa, cfg.chunks, &mut rng)
            })
            .collect()
    });
    let mut records = Vec::new();
    for ((i, _), r) in kept.iter().zip(assembled) {
        match r {
            Ok(r) => records.push(r),
            Err(e) => skip(&mut stats, &annotations[*i].video_id, e)?,
        }
    }
    stats.emitted = records.len();
    Ok(PipelineOutput { records, stats })
}

/// One JSON object per line.
pub fn write_records(path: &Path, records: &[QaRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests;
