//! Single-file checkpoints: magic, `u32` manifest length, JSON manifest, then
//! every tensor as little-endian `f64` in manifest order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingInit, ModelConfig, ParamGroup, StagedModel, Tokenizer};
use crate::codec::TemporalVocab;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GVTGCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: ParamGroup,
    pub len: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub stage: u8,
    pub config: ModelConfig,
    pub encoder: EncoderConfig,
    pub base_vocab: usize,
    pub eos_id: usize,
    pub vocab: Option<TemporalVocab>,
    pub adapters: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    pub tensors: Vec<TensorEntry>,
}

pub fn manifest(model: &StagedModel, tokenizer: Option<&Tokenizer>) -> Manifest {
    let mut tensors = Vec::new();
    let mut offset = 0;
    model.visit(&mut |name, group, values| {
        tensors.push(TensorEntry { name: name.to_string(), group, len: values.len(), offset });
        offset += values.len();
    });
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        stage: model.stage,
        config: model.config.clone(),
        encoder: model.encoder.clone(),
        base_vocab: model.base_vocab,
        eos_id: model.eos_id,
        vocab: model.vocab.clone(),
        adapters: model.adapters.is_some(),
        words: tokenizer.map(|t| t.words().to_vec()),
        tensors,
    }
}

pub fn save(path: &Path, model: &StagedModel, tokenizer: Option<&Tokenizer>) -> Result<()> {
    let header = serde_json::to_vec(&manifest(model, tokenizer))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    let mut err = None;
    model.visit(&mut |_, _, values| {
        for v in values {
            if let Err(e) = out.write_all(&v.to_le_bytes()) {
                err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(StagedModel, Option<Tokenizer>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Schema(format!("{} is not a checkpoint", path.display())));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body_start = 12 + len;
    if bytes.len() < body_start {
        return Err(Error::Schema("truncated checkpoint manifest".into()));
    }
    let m: Manifest = serde_json::from_slice(&bytes[12..body_start])?;
    let body = &bytes[body_start..];

    let mut model = StagedModel::new(m.config.clone(), m.encoder.clone(), m.base_vocab, m.eos_id, 0)?;
    if let Some(vocab) = m.vocab.clone() {
        model.extend_vocab(vocab, EmbeddingInit::MeanNoise { std: 0.0 }, 0)?;
    }
    if m.adapters {
        model.attach_adapters(0)?;
    }
    model.stage = m.stage;

    let expected = manifest(&model, None).tensors;
    if expected.len() != m.tensors.len()
        || expected.iter().zip(&m.tensors).any(|(a, b)| a.name != b.name || a.len != b.len || a.offset != b.offset)
    {
        return Err(Error::Schema("checkpoint tensors do not match the declared architecture".into()));
    }
    let total: usize = expected.iter().map(|t| t.len).sum();
    if body.len() != total * 8 {
        return Err(Error::Schema(format!("checkpoint body has {} bytes, expected {}", body.len(), total * 8)));
    }
    let mut cursor = body.chunks_exact(8);
    model.visit_mut(&mut |_, _, values| {
        for v in values.iter_mut() {
            *v = f64::from_le_bytes(cursor.next().expect("length checked").try_into().expect("8 bytes"));
        }
    });
    let tokenizer = m.words.map(Tokenizer::from_words);
    Ok((model, tokenizer))
}
