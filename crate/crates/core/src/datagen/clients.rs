use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::prompt::{ChatMessage, Role};
use super::SegmentAnnotation;
use crate::encoder::text_seed;
use crate::error::{Error, Result};
use crate::metrics::tokens;

pub trait ChatClient: Sync {
    fn model(&self) -> &str;
    fn chat(&self, messages: &[ChatMessage]) -> Result<String>;
}

/// Text to unit-norm vector.
pub trait EmbeddingClient: Sync {
    fn model(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Offline embedder: a shared direction of weight `common` plus one seeded
/// Gaussian direction per word. Texts with no words in common land near
/// `common^2 / (common^2 + words)`, so moderate similarities are common.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub common: f64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64, common: 1.5 }
    }
}

impl HashEmbedder {
    fn direction(&self, word: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(text_seed(word, "embed"));
        let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(v)
    }
}

impl EmbeddingClient for HashEmbedder {
    fn model(&self) -> &str {
        "stub-hash-embedder"
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = self.direction("");
        v.iter_mut().for_each(|x| *x *= self.common);
        for w in tokens(text) {
            for (a, b) in v.iter_mut().zip(self.direction(&w)) {
                *a += b;
            }
        }
        Ok(normalize(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubMode {
    #[default]
    WellFormed,
    /// Responses lack the answer line.
    Malformed,
}

/// Offline generator. Reads the last user message, picks a segment that
/// does not span the whole video and answers with the head of its
/// description.
#[derive(Debug, Clone, Default)]
pub struct StubChat {
    pub mode: StubMode,
}

fn parse_user(text: &str) -> Option<SegmentAnnotation> {
    let mut lines = text.lines();
    let duration = lines.next()?.strip_prefix("video duration:")?.trim().strip_suffix("seconds")?.trim().parse().ok()?;
    let mut segments = Vec::new();
    for line in lines {
        let (_, rest) = line.split_once(": [")?;
        let (span, desc) = rest.split_once(']')?;
        let (s, e) = span.split_once(',')?;
        segments.push(super::Segment { start: s.trim().parse().ok()?, end: e.trim().parse().ok()?, description: desc.trim().into() });
    }
    Some(SegmentAnnotation { video_id: String::new(), duration, segments })
}

impl ChatClient for StubChat {
    fn model(&self) -> &str {
        "stub-chat"
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        let user = messages.iter().rev().find(|m| m.role == Role::User).ok_or_else(|| Error::Client("no user message".into()))?;
        let ann = parse_user(&user.content).ok_or_else(|| Error::Client("unreadable user message".into()))?;
        let pick = {
            let partial: Vec<usize> =
                (0..ann.segments.len()).filter(|&i| ann.segments[i].end - ann.segments[i].start < ann.duration).collect();
            let pool = if partial.is_empty() { (0..ann.segments.len()).collect() } else { partial };
            pool[(text_seed(&user.content, "pick") % pool.len() as u64) as usize]
        };
        let seg = &ann.segments[pick];
        let words: Vec<String> = tokens(&seg.description);
        let answer = words.iter().take(7).cloned().collect::<Vec<_>>().join(" ");
        let question = format!("What happens in the part of the video from {} to {} seconds?", seg.start, seg.end);
        let mut out = format!("chosen segment: segment-{}\nsegment timestamps: [{}, {}]\nquestion: {question}", pick + 1, seg.start, seg.end);
        if self.mode == StubMode::WellFormed {
            out.push_str(&format!("\nanswer: {answer}"));
        }
        Ok(out)
    }
}

/// Remote endpoint. `base_url` and `model` may reference environment
/// variables as `${NAME}`; the key is read from `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

/// Replace every `${NAME}` with the value of that environment variable.
pub fn interpolate(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 2..];
        let j = tail.find('}').ok_or_else(|| Error::Config(format!("unterminated ${{ in {s:?}")))?;
        let name = &tail[..j];
        out.push_str(&std::env::var(name).map_err(|_| Error::Config(format!("environment variable {name} is not set")))?);
        rest = &tail[j + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

struct Resolved {
    base_url: String,
    model: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl Resolved {
    fn new(ep: &Endpoint) -> Result<Self> {
        let key = match &ep.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder().timeout_global(Some(std::time::Duration::from_secs(ep.timeout_secs))).build().into();
        Ok(Self { base_url: interpolate(&ep.base_url)?.trim_end_matches('/').to_string(), model: interpolate(&ep.model)?, key, agent })
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut req = self.agent.post(&format!("{}/{path}", self.base_url));
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Error::Client(e.to_string()))?;
        resp.body_mut().read_json().map_err(|e| Error::Client(e.to_string()))
    }
}

/// OpenAI-style `chat/completions` client.
pub struct HttpChatClient(Resolved);

impl HttpChatClient {
    pub fn new(ep: &Endpoint) -> Result<Self> {
        Resolved::new(ep).map(Self)
    }
}

impl ChatClient for HttpChatClient {
    fn model(&self) -> &str {
        &self.0.model
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = serde_json::json!({ "model": self.0.model, "messages": messages, "temperature": 0 });
        let v = self.0.post("chat/completions", &body)?;
        v["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| Error::Client(format!("no message content in {v}")))
    }
}

/// OpenAI-style `embeddings` client; vectors are re-normalised.
pub struct HttpEmbeddingClient(Resolved);

impl HttpEmbeddingClient {
    pub fn new(ep: &Endpoint) -> Result<Self> {
        Resolved::new(ep).map(Self)
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn model(&self) -> &str {
        &self.0.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let v = self.0.post("embeddings", &serde_json::json!({ "model": self.0.model, "input": text }))?;
        let arr = v["data"][0]["embedding"].as_array().ok_or_else(|| Error::Client(format!("no embedding in response for {text:?}")))?;
        let vec: Vec<f64> = arr.iter().map(|x| x.as_f64().ok_or_else(|| Error::Client("non-numeric embedding".into()))).collect::<Result<_>>()?;
        if vec.is_empty() {
            return Err(Error::Client("empty embedding".into()));
        }
        Ok(normalize(vec))
    }
}
