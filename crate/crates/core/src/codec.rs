//! Relative temporal tokens.
//!
//! A video of `L` seconds is cut into `M` equal chunks whose `M + 1`
//! boundaries are the tokens `<0>` .. `<M>`. A timestamp maps to the nearest
//! boundary, and grounded text interleaves those tokens with captions:
//!
//! ```text
//! From <0> to <6>, a baby is crying. From <7> to <16>, a man is coming and picking up the baby.
//! ```

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VIDEO_START: &str = "<video>";
pub const VIDEO_END: &str = "</video>";
pub const GROUNDED: &str = "<grounded>";

/// Number of special markers appended after the temporal tokens.
pub const SPECIAL_COUNT: usize = 3;

/// Layout of temporal and special tokens appended to a base vocabulary.
///
/// Temporal token `<t>` has global id `base_size + t`; the three specials
/// follow in the order `<video>`, `</video>`, `<grounded>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalVocab {
    base_size: usize,
    chunks: usize,
}

/// Build the deterministic layout for `chunks` (M) over a base vocabulary.
pub fn vocab_layout(base_size: usize, chunks: usize) -> Result<TemporalVocab> {
    if base_size == 0 {
        return Err(Error::InvalidInput("base vocabulary must not be empty".into()));
    }
    if chunks == 0 {
        return Err(Error::InvalidInput("chunk count M must be at least 1".into()));
    }
    Ok(TemporalVocab { base_size, chunks })
}

impl TemporalVocab {
    pub fn base_size(&self) -> usize {
        self.base_size
    }

    /// M, the number of chunks. There are `M + 1` temporal tokens.
    pub fn chunks(&self) -> usize {
        self.chunks
    }

    pub fn temporal_count(&self) -> usize {
        self.chunks + 1
    }

    pub fn total_size(&self) -> usize {
        self.base_size + self.temporal_count() + SPECIAL_COUNT
    }

    /// Number of rows appended to the base vocabulary.
    pub fn added_count(&self) -> usize {
        self.temporal_count() + SPECIAL_COUNT
    }

    pub fn temporal_id(&self, t: usize) -> Result<usize> {
        if t > self.chunks {
            return Err(Error::InvalidToken { token: t, max: self.chunks });
        }
        Ok(self.base_size + t)
    }

    /// Token index `t` for a global id, if the id is a temporal token.
    pub fn temporal_index(&self, id: usize) -> Option<usize> {
        (id >= self.base_size && id <= self.base_size + self.chunks).then(|| id - self.base_size)
    }

    pub fn is_temporal(&self, id: usize) -> bool {
        self.temporal_index(id).is_some()
    }

    pub fn temporal_ids(&self) -> std::ops::RangeInclusive<usize> {
        self.base_size..=self.base_size + self.chunks
    }

    pub fn video_start_id(&self) -> usize {
        self.base_size + self.chunks + 1
    }

    pub fn video_end_id(&self) -> usize {
        self.base_size + self.chunks + 2
    }

    pub fn grounded_id(&self) -> usize {
        self.base_size + self.chunks + 3
    }

    pub fn special_ids(&self) -> [usize; SPECIAL_COUNT] {
        [self.video_start_id(), self.video_end_id(), self.grounded_id()]
    }

    /// Literal surface form of an appended id (`<17>`, `<video>`, ...).
    pub fn literal(&self, id: usize) -> Option<String> {
        if let Some(t) = self.temporal_index(id) {
            return Some(format!("<{t}>"));
        }
        match id {
            x if x == self.video_start_id() => Some(VIDEO_START.to_string()),
            x if x == self.video_end_id() => Some(VIDEO_END.to_string()),
            x if x == self.grounded_id() => Some(GROUNDED.to_string()),
            _ => None,
        }
    }

    /// Inverse of [`TemporalVocab::literal`].
    pub fn lookup_literal(&self, literal: &str) -> Option<usize> {
        match literal {
            VIDEO_START => return Some(self.video_start_id()),
            VIDEO_END => return Some(self.video_end_id()),
            GROUNDED => return Some(self.grounded_id()),
            _ => {}
        }
        let inner = literal.strip_prefix('<')?.strip_suffix('>')?;
        if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let t: usize = inner.parse().ok()?;
        self.temporal_id(t).ok()
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if !duration.is_finite() || duration <= 0.0 {
        return Err(Error::InvalidInput(format!("duration must be finite and positive, got {duration}")));
    }
    Ok(())
}

/// Quantize a timestamp: `t = Round(M * tau / L)`, half away from zero,
/// clamped to `[0, M]`. Timestamps past the end of the video are clamped
/// rather than rejected because annotations routinely overshoot by a frame.
pub fn timestamp_to_token(tau: f64, duration: f64, chunks: usize) -> Result<usize> {
    check_duration(duration)?;
    if !tau.is_finite() {
        return Err(Error::InvalidInput(format!("timestamp must be finite, got {tau}")));
    }
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("timestamp must be non-negative, got {tau}")));
    }
    if chunks == 0 {
        return Err(Error::InvalidInput("chunk count M must be at least 1".into()));
    }
    let scaled = (chunks as f64 * tau / duration).round();
    Ok((scaled as usize).min(chunks))
}

/// `tau = L * t / M`.
pub fn token_to_timestamp(t: usize, chunks: usize, duration: f64) -> Result<f64> {
    check_duration(duration)?;
    if chunks == 0 {
        return Err(Error::InvalidInput("chunk count M must be at least 1".into()));
    }
    if t > chunks {
        return Err(Error::InvalidToken { token: t, max: chunks });
    }
    Ok(duration * t as f64 / chunks as f64)
}

/// A captioned time span in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedEvent {
    pub start: f64,
    pub end: f64,
    pub caption: String,
}

impl GroundedEvent {
    pub fn new(start: f64, end: f64, caption: impl Into<String>) -> Self {
        Self { start, end, caption: caption.into() }
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        if !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::NonFinite("event bounds".into()));
        }
        if self.start < 0.0 || self.start > self.end {
            return Err(Error::Ordering(format!("event [{}, {}] has start after end", self.start, self.end)));
        }
        if self.end > duration {
            return Err(Error::InvalidInput(format!("event ends at {} past duration {duration}", self.end)));
        }
        if self.caption.trim().is_empty() {
            return Err(Error::InvalidInput("event caption is empty".into()));
        }
        Ok(())
    }
}

/// Token ids mixing text and temporal tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedSequence {
    pub ids: Vec<usize>,
    pub grounded: bool,
}

impl GroundedSequence {
    pub fn new(ids: Vec<usize>, vocab: &TemporalVocab) -> Self {
        let grounded = ids.contains(&vocab.grounded_id());
        Self { ids, grounded }
    }

    /// Indices `t` of every temporal token, in order.
    pub fn temporal_indices(&self, vocab: &TemporalVocab) -> Vec<usize> {
        self.ids.iter().filter_map(|&id| vocab.temporal_index(id)).collect()
    }
}

/// "From <a> to <b>" for a span, without caption or trailing period.
pub fn render_span(start: f64, end: f64, duration: f64, vocab: &TemporalVocab) -> Result<String> {
    let a = timestamp_to_token(start, duration, vocab.chunks())?;
    let b = timestamp_to_token(end, duration, vocab.chunks())?;
    Ok(format!("From <{a}> to <{b}>"))
}

/// Render events as `From <a> to <b>, caption.` clauses joined by spaces.
pub fn render_grounded_text(events: &[GroundedEvent], duration: f64, vocab: &TemporalVocab) -> Result<String> {
    if events.is_empty() {
        return Err(Error::EmptyInput("event list".into()));
    }
    let mut clauses = Vec::with_capacity(events.len());
    let mut prev_start = f64::NEG_INFINITY;
    for ev in events {
        if ev.start > ev.end {
            return Err(Error::Ordering(format!("event [{}, {}] has start after end", ev.start, ev.end)));
        }
        if ev.start < prev_start {
            return Err(Error::Ordering("events are not sorted by start time".into()));
        }
        prev_start = ev.start;
        let caption = ev.caption.trim().trim_end_matches('.').trim_end();
        if caption.is_empty() {
            return Err(Error::InvalidInput("event caption is empty".into()));
        }
        clauses.push(format!("{}, {caption}.", render_span(ev.start, ev.end, duration, vocab)?));
    }
    Ok(clauses.join(" "))
}

/// Result of parsing free-form grounded text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGrounding {
    /// Recovered events; captions are empty for bare `From <a> to <b>` spans.
    pub events: Vec<GroundedEvent>,
    /// Clauses that matched the span pattern but could not be decoded.
    pub malformed: Vec<String>,
}

fn span_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)\bfrom\s*<(\d+)>\s*to\s*<(\d+)>").expect("static pattern"))
}

/// Extract every `From <a> to <b>` span and the caption that follows it.
///
/// Spans whose tokens fall outside `<0>..<M>` or run backwards are skipped
/// and listed in [`ParsedGrounding::malformed`].
pub fn parse_grounded_text(text: &str, vocab: &TemporalVocab, duration: f64) -> Result<ParsedGrounding> {
    check_duration(duration)?;
    let pattern = span_pattern();
    let matches: Vec<_> = pattern.captures_iter(text).collect();
    let mut events = Vec::new();
    let mut malformed = Vec::new();
    for (i, caps) in matches.iter().enumerate() {
        let whole = caps.get(0).expect("group 0");
        let tail_end = matches.get(i + 1).map_or(text.len(), |next| next.get(0).expect("group 0").start());
        let caption = text[whole.end()..tail_end]
            .trim()
            .trim_start_matches(',')
            .trim()
            .trim_end_matches('.')
            .trim_end()
            .to_string();

        let decode = |s: &str| -> Option<usize> { s.parse::<usize>().ok().filter(|&t| t <= vocab.chunks()) };
        match (decode(&caps[1]), decode(&caps[2])) {
            (Some(a), Some(b)) if a <= b => {
                let start = token_to_timestamp(a, vocab.chunks(), duration)?;
                let end = token_to_timestamp(b, vocab.chunks(), duration)?;
                events.push(GroundedEvent { start, end, caption });
            }
            _ => malformed.push(text[whole.start()..tail_end].trim().to_string()),
        }
    }
    if events.is_empty() {
        return Err(Error::ParseFailure { raw: text.to_string() });
    }
    Ok(ParsedGrounding { events, malformed })
}
