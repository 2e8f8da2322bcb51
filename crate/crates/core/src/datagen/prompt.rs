use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SegmentAnnotation;
use crate::error::{Error, Result};

pub const SYSTEM_PROMPT: &str = "You are a good question generator. I need your help in generating question-answer pairs pertaining to the visual event descriptions. I have a video and I will provide you with descriptions of certain segments and their corresponding timestamps within this video. You need to consider these segments comprehensively based on the given description and timestamps and select one segment which you think can provide a HIGH-QUALITY QUESTION. Based on the description of that segment, ask a question related to that segment, as well as one correct answer. Both the proposed answer and question should be consistent with the content of the give description. BE CAREFUL! Your proposed questions and answers should follow these rules:
(0) Avoid choosing the segment spanning across the whole video.
(1) The question you raised should include causal and temporal relationships as much as possible. Question types should be diverse including WHY, HOW, WHAT, WHERE, etc.
(2) NEVER involve anything that is not covered in the given descriptions.
(3) The answer should NEVER appear in your question.
(4) Your answer should be a phrase no more than 7 words. Keep your answers concise and accurate.";

pub const DEMO_USER: &str = "video duration: 82.73 seconds
segment-1: [0.83, 19.86] A young woman is seen standing in a room and leads into her dancing.
segment-2: [17.37, 60.81] The girl dances around the room while the camera captures her movements.
segment-3: [56.26, 79.42] She continues dancing around the room and ends by laying on the floor.";

pub const DEMO_RESPONSE: &str = "chosen segment: segment-3
segment timestamps: [56.26, 79.42]
question: What did the girl do after she ended dancing?
answer: lay on the floor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// "video duration: L seconds" followed by one line per segment.
pub fn user_message(ann: &SegmentAnnotation) -> String {
    let mut out = format!("video duration: {} seconds", ann.duration);
    for (i, s) in ann.segments.iter().enumerate() {
        out.push_str(&format!("\nsegment-{}: [{}, {}] {}", i + 1, s.start, s.end, s.description.trim()));
    }
    out
}

/// System rules, one worked demonstration, then the annotation itself.
pub fn build_prompt(ann: &SegmentAnnotation) -> Result<Vec<ChatMessage>> {
    if ann.segments.is_empty() {
        return Err(Error::EmptyInput(format!("annotation {} has no segments", ann.video_id)));
    }
    Ok(vec![
        ChatMessage::new(Role::System, SYSTEM_PROMPT),
        ChatMessage::new(Role::User, DEMO_USER),
        ChatMessage::new(Role::Assistant, DEMO_RESPONSE),
        ChatMessage::new(Role::User, user_message(ann)),
    ])
}

/// Fields of a generator response. `segment` is 1-based as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub segment: usize,
    pub start: f64,
    pub end: f64,
    pub question: String,
    pub answer: String,
}

fn field_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\s*(chosen segment|segment timestamps|question|answer)\s*:\s*(.*?)\s*$").expect("valid regex"))
}

fn span_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\]$").expect("valid regex"))
}

/// Read the four labelled lines of a response, in any order.
pub fn parse_generation(text: &str) -> Result<Generation> {
    let mut fields: [Option<&str>; 4] = [None; 4];
    for cap in field_pattern().captures_iter(text) {
        let slot = match cap[1].to_lowercase().as_str() {
            "chosen segment" => 0,
            "segment timestamps" => 1,
            "question" => 2,
            _ => 3,
        };
        fields[slot].get_or_insert(cap.get(2).map_or("", |m| m.as_str()));
    }
    let names = ["chosen segment", "segment timestamps", "question", "answer"];
    let get = |k: usize| {
        fields[k].filter(|v| !v.is_empty()).ok_or_else(|| Error::GenerationFormat(format!("missing \"{}:\" line", names[k])))
    };
    let seg_text = get(0)?;
    let segment = seg_text
        .to_lowercase()
        .trim_start_matches("segment")
        .trim_start_matches(['-', ' '])
        .parse::<usize>()
        .map_err(|_| Error::GenerationFormat(format!("bad segment label {seg_text:?}")))?;
    let span = get(1)?;
    let cap = span_pattern().captures(span).ok_or_else(|| Error::GenerationFormat(format!("bad timestamps {span:?}")))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::GenerationFormat(format!("bad number {s:?}")));
    Ok(Generation {
        segment,
        start: num(&cap[1])?,
        end: num(&cap[2])?,
        question: get(2)?.to_string(),
        answer: get(3)?.to_string(),
    })
}
