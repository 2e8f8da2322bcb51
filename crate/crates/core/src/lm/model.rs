//! Toy pre-norm transformer decoder with hand-written backward pass.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lora::{adapter_scale, Adapter, AdapterTarget};
use crate::codec::TemporalVocab;
use crate::encoder::{Activation, EncoderConfig, Mlp, MlpTrace, PooledSegment};
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub projector_hidden: usize,
    #[serde(default)]
    pub projector_activation: Activation,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub lora_targets: Vec<AdapterTarget>,
    /// Standard deviation of the base token embeddings.
    pub embed_std: f64,
    /// Noise added to the base-mean initialisation of appended tokens.
    pub new_token_noise: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            layers: 2,
            heads: 2,
            ffn_dim: 64,
            max_positions: 96,
            projector_hidden: 32,
            projector_activation: Activation::Gelu,
            lora_rank: 4,
            lora_alpha: 8.0,
            lora_targets: AdapterTarget::ALL.to_vec(),
            embed_std: 0.5,
            new_token_noise: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!("{} heads do not divide width {}", self.heads, self.dim)));
        }
        if self.lora_rank == 0 || self.lora_alpha <= 0.0 {
            return Err(Error::Config("adapter rank and alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter groups used for stage masks and per-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Projector,
    Embedding,
    Head,
    Backbone,
    Adapter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl Norm {
    fn new(dim: usize) -> Self {
        Self { gain: Array1::ones(dim), bias: Array1::zeros(dim) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub norm1: Norm,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub norm2: Norm,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Adapters of one block, keyed by the matrix they modify.
pub type BlockAdapters = BTreeMap<AdapterTarget, Adapter>;

/// Stacked pooled features of a whole video, ready for the two projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoInput {
    /// `(K * N_S, D_S)`, segment-major.
    pub spatial: Array2<f64>,
    /// `(K * (T/K) * N_T, D_T)`, segment-major, frames chronological.
    pub temporal: Array2<f64>,
    pub segments: usize,
    pub spatial_per_segment: usize,
    pub temporal_per_segment: usize,
}

impl VideoInput {
    pub fn from_pooled(segments: &[PooledSegment]) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::EmptyInput("video has no segments".into()))?;
        let (sps, tps) = (first.spatial.nrows(), first.temporal.nrows());
        if segments.iter().any(|s| s.spatial.dim() != first.spatial.dim() || s.temporal.dim() != first.temporal.dim()) {
            return Err(Error::Shape("segments disagree on pooled shapes".into()));
        }
        let stack = |pick: fn(&PooledSegment) -> ArrayView2<f64>| -> Result<Array2<f64>> {
            let views: Vec<ArrayView2<f64>> = segments.iter().map(pick).collect();
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
        };
        Ok(Self {
            spatial: stack(|s| s.spatial.view())?,
            temporal: stack(|s| s.temporal.view())?,
            segments: segments.len(),
            spatial_per_segment: sps,
            temporal_per_segment: tps,
        })
    }

    pub fn rows(&self) -> usize {
        self.segments * (self.spatial_per_segment + self.temporal_per_segment)
    }

    /// Sequence offset (relative to the first video row) of spatial row `i`.
    fn spatial_row(&self, i: usize) -> usize {
        let seg = i / self.spatial_per_segment;
        seg * (self.spatial_per_segment + self.temporal_per_segment) + i % self.spatial_per_segment
    }

    fn temporal_row(&self, j: usize) -> usize {
        let seg = j / self.temporal_per_segment;
        seg * (self.spatial_per_segment + self.temporal_per_segment) + self.spatial_per_segment + j % self.temporal_per_segment
    }
}

/// Token slots around the video soft prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub video: std::sync::Arc<VideoInput>,
    pub before_video: Vec<usize>,
    pub after_video: Vec<usize>,
}

impl Prompt {
    pub fn len(&self) -> usize {
        self.before_video.len() + self.video.rows() + self.after_video.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn video_range(&self) -> std::ops::Range<usize> {
        let start = self.before_video.len();
        start..start + self.video.rows()
    }
}

/// The decoder and all of its parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedModel {
    pub config: ModelConfig,
    pub encoder: EncoderConfig,
    pub stage: u8,
    pub base_vocab: usize,
    pub vocab: Option<TemporalVocab>,
    pub eos_id: usize,
    pub spatial_proj: Option<Mlp>,
    pub temporal_proj: Option<Mlp>,
    pub embedding: Array2<f64>,
    pub positions: Array2<f64>,
    pub blocks: Vec<Block>,
    pub final_norm: Norm,
    pub head: Array2<f64>,
    pub adapters: Option<Vec<BlockAdapters>>,
}

fn gaussian(shape: (usize, usize), std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_fn(shape, |_| normal.sample(rng))
}

impl StagedModel {
    /// Random backbone over a base vocabulary of `base_vocab` tokens. Temporal
    /// tokens are appended later with [`StagedModel::extend_vocab`].
    pub fn new(config: ModelConfig, encoder: EncoderConfig, base_vocab: usize, eos_id: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        encoder.validate()?;
        if encoder.model_dim != config.dim {
            return Err(Error::Config(format!(
                "encoder projects to {} but the decoder width is {}",
                encoder.model_dim, config.dim
            )));
        }
        if eos_id >= base_vocab {
            return Err(Error::Config("end-of-sequence id must be in the base vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let proj_dims = |d_in: usize| vec![d_in, config.projector_hidden, d];
        let spatial_proj = match encoder.spatial {
            Some(sd) => Some(Mlp::random(&proj_dims(sd.channels), config.projector_activation, &mut rng)?),
            None => None,
        };
        let temporal_proj = match encoder.temporal {
            Some(td) => Some(Mlp::random(&proj_dims(td.channels), config.projector_activation, &mut rng)?),
            None => None,
        };
        let embedding = gaussian((base_vocab, d), config.embed_std, &mut rng);
        let positions = gaussian((config.max_positions, d), 0.1, &mut rng);
        let attn_std = (1.0 / d as f64).sqrt();
        let blocks = (0..config.layers)
            .map(|_| Block {
                norm1: Norm::new(d),
                wq: gaussian((d, d), attn_std, &mut rng),
                wk: gaussian((d, d), attn_std, &mut rng),
                wv: gaussian((d, d), attn_std, &mut rng),
                wo: gaussian((d, d), attn_std, &mut rng),
                norm2: Norm::new(d),
                w1: gaussian((config.ffn_dim, d), attn_std, &mut rng),
                b1: Array1::zeros(config.ffn_dim),
                w2: gaussian((d, config.ffn_dim), (1.0 / config.ffn_dim as f64).sqrt(), &mut rng),
                b2: Array1::zeros(d),
            })
            .collect();
        let head = gaussian((base_vocab, d), attn_std, &mut rng);
        Ok(Self {
            config,
            encoder,
            stage: 1,
            base_vocab,
            vocab: None,
            eos_id,
            spatial_proj,
            temporal_proj,
            embedding,
            positions,
            blocks,
            final_norm: Norm::new(d),
            head,
            adapters: None,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    /// Append rows for the temporal and special tokens to both the embedding
    /// table and the output head.
    pub fn extend_vocab(&mut self, vocab: TemporalVocab, init: super::EmbeddingInit, seed: u64) -> Result<()> {
        if self.vocab.is_some() {
            return Err(Error::Config("vocabulary already extended".into()));
        }
        self.embedding = super::extend_embeddings(&self.embedding, &vocab, init, seed)?;
        self.head = super::extend_embeddings(&self.head, &vocab, init, seed ^ 0x9e37_79b9_7f4a_7c15)?;
        self.vocab = Some(vocab);
        Ok(())
    }

    /// Attach fresh adapters (zero `B`) to every configured target.
    pub fn attach_adapters(&mut self, seed: u64) -> Result<()> {
        if self.adapters.is_some() {
            return Err(Error::Config("adapters already attached".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, r) = (self.config.dim, self.config.ffn_dim, self.config.lora_rank);
        let adapters = (0..self.blocks.len())
            .map(|_| {
                self.config
                    .lora_targets
                    .iter()
                    .map(|&t| {
                        let (d_in, d_out) = match t {
                            AdapterTarget::FfnUp => (d, f),
                            AdapterTarget::FfnDown => (f, d),
                            _ => (d, d),
                        };
                        (t, Adapter::new(d_in, d_out, r, &mut rng))
                    })
                    .collect()
            })
            .collect();
        self.adapters = Some(adapters);
        Ok(())
    }

    pub fn adapter_parameter_count(&self) -> usize {
        self.adapters
            .as_ref()
            .map_or(0, |blocks| blocks.iter().flat_map(|b| b.values()).map(Adapter::parameter_count).sum())
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, _, values| values.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Visit every parameter tensor in a fixed order.
    pub fn visit(&self, f: &mut dyn FnMut(&str, ParamGroup, &[f64])) {
        fn mlp(name: &str, m: &Option<Mlp>, f: &mut dyn FnMut(&str, ParamGroup, &[f64])) {
            if let Some(m) = m {
                for (i, l) in m.layers.iter().enumerate() {
                    f(&format!("{name}.{i}.weight"), ParamGroup::Projector, l.weight.as_slice().expect("contiguous"));
                    f(&format!("{name}.{i}.bias"), ParamGroup::Projector, l.bias.as_slice().expect("contiguous"));
                }
            }
        }
        let bb = ParamGroup::Backbone;
        mlp("proj.spatial", &self.spatial_proj, f);
        mlp("proj.temporal", &self.temporal_proj, f);
        f("embedding", ParamGroup::Embedding, self.embedding.as_slice().expect("contiguous"));
        f("positions", bb, self.positions.as_slice().expect("contiguous"));
        for (l, b) in self.blocks.iter().enumerate() {
            let p = |n: &str| format!("blocks.{l}.{n}");
            f(&p("norm1.gain"), bb, b.norm1.gain.as_slice().expect("contiguous"));
            f(&p("norm1.bias"), bb, b.norm1.bias.as_slice().expect("contiguous"));
            f(&p("wq"), bb, b.wq.as_slice().expect("contiguous"));
            f(&p("wk"), bb, b.wk.as_slice().expect("contiguous"));
            f(&p("wv"), bb, b.wv.as_slice().expect("contiguous"));
            f(&p("wo"), bb, b.wo.as_slice().expect("contiguous"));
            f(&p("norm2.gain"), bb, b.norm2.gain.as_slice().expect("contiguous"));
            f(&p("norm2.bias"), bb, b.norm2.bias.as_slice().expect("contiguous"));
            f(&p("w1"), bb, b.w1.as_slice().expect("contiguous"));
            f(&p("b1"), bb, b.b1.as_slice().expect("contiguous"));
            f(&p("w2"), bb, b.w2.as_slice().expect("contiguous"));
            f(&p("b2"), bb, b.b2.as_slice().expect("contiguous"));
        }
        f("final_norm.gain", bb, self.final_norm.gain.as_slice().expect("contiguous"));
        f("final_norm.bias", bb, self.final_norm.bias.as_slice().expect("contiguous"));
        f("head", ParamGroup::Head, self.head.as_slice().expect("contiguous"));
        if let Some(adapters) = &self.adapters {
            for (l, block) in adapters.iter().enumerate() {
                for (t, a) in block {
                    f(&format!("adapters.{l}.{}.a", t.name()), ParamGroup::Adapter, a.a.as_slice().expect("contiguous"));
                    f(&format!("adapters.{l}.{}.b", t.name()), ParamGroup::Adapter, a.b.as_slice().expect("contiguous"));
                }
            }
        }
    }

    /// Mutable counterpart of [`StagedModel::visit`], same order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamGroup, &mut [f64])) {
        fn mlp(name: &str, m: &mut Option<Mlp>, f: &mut dyn FnMut(&str, ParamGroup, &mut [f64])) {
            if let Some(m) = m {
                for (i, l) in m.layers.iter_mut().enumerate() {
                    f(&format!("{name}.{i}.weight"), ParamGroup::Projector, l.weight.as_slice_mut().expect("contiguous"));
                    f(&format!("{name}.{i}.bias"), ParamGroup::Projector, l.bias.as_slice_mut().expect("contiguous"));
                }
            }
        }
        let bb = ParamGroup::Backbone;
        mlp("proj.spatial", &mut self.spatial_proj, f);
        mlp("proj.temporal", &mut self.temporal_proj, f);
        f("embedding", ParamGroup::Embedding, self.embedding.as_slice_mut().expect("contiguous"));
        f("positions", bb, self.positions.as_slice_mut().expect("contiguous"));
        for (l, b) in self.blocks.iter_mut().enumerate() {
            let p = |n: &str| format!("blocks.{l}.{n}");
            f(&p("norm1.gain"), bb, b.norm1.gain.as_slice_mut().expect("contiguous"));
            f(&p("norm1.bias"), bb, b.norm1.bias.as_slice_mut().expect("contiguous"));
            f(&p("wq"), bb, b.wq.as_slice_mut().expect("contiguous"));
            f(&p("wk"), bb, b.wk.as_slice_mut().expect("contiguous"));
            f(&p("wv"), bb, b.wv.as_slice_mut().expect("contiguous"));
            f(&p("wo"), bb, b.wo.as_slice_mut().expect("contiguous"));
            f(&p("norm2.gain"), bb, b.norm2.gain.as_slice_mut().expect("contiguous"));
            f(&p("norm2.bias"), bb, b.norm2.bias.as_slice_mut().expect("contiguous"));
            f(&p("w1"), bb, b.w1.as_slice_mut().expect("contiguous"));
            f(&p("b1"), bb, b.b1.as_slice_mut().expect("contiguous"));
            f(&p("w2"), bb, b.w2.as_slice_mut().expect("contiguous"));
            f(&p("b2"), bb, b.b2.as_slice_mut().expect("contiguous"));
        }
        f("final_norm.gain", bb, self.final_norm.gain.as_slice_mut().expect("contiguous"));
        f("final_norm.bias", bb, self.final_norm.bias.as_slice_mut().expect("contiguous"));
        f("head", ParamGroup::Head, self.head.as_slice_mut().expect("contiguous"));
        if let Some(adapters) = &mut self.adapters {
            for (l, block) in adapters.iter_mut().enumerate() {
                for (t, a) in block.iter_mut() {
                    f(&format!("adapters.{l}.{}.a", t.name()), ParamGroup::Adapter, a.a.as_slice_mut().expect("contiguous"));
                    f(&format!("adapters.{l}.{}.b", t.name()), ParamGroup::Adapter, a.b.as_slice_mut().expect("contiguous"));
                }
            }
        }
    }

    /// Scalar parameter count per group.
    pub fn group_sizes(&self) -> BTreeMap<ParamGroup, usize> {
        let mut sizes = BTreeMap::new();
        self.visit(&mut |_, g, v| *sizes.entry(g).or_insert(0) += v.len());
        sizes
    }

    fn adapter(&self, layer: usize, target: AdapterTarget) -> Option<&Adapter> {
        self.adapters.as_ref().and_then(|a| a[layer].get(&target))
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        let v = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::InvalidInput(format!("token id {bad} outside vocabulary of {v}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward pass

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn norm_forward(x: &Array2<f64>, n: &Norm) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &n.gain + &n.bias;
    (y, NormCache { xhat, inv_std })
}

fn norm_backward(dy: &Array2<f64>, n: &Norm, cache: &NormCache) -> Array2<f64> {
    let d = dy.ncols() as f64;
    let dxhat = dy * &n.gain;
    let sum_dxhat = dxhat.sum_axis(Axis(1));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1));
    let mut dx = dxhat * d;
    dx -= &sum_dxhat.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &sum_dxhat_xhat.view().insert_axis(Axis(1)));
    dx * &(cache.inv_std.mapv(|s| s / d)).view().insert_axis(Axis(1))
}

/// `x W^T (+ scale * x A^T B^T)`; returns the adapter bottleneck `x A^T` too.
fn project(x: &Array2<f64>, w: &Array2<f64>, adapter: Option<&Adapter>, scale: f64) -> (Array2<f64>, Option<Array2<f64>>) {
    let mut y = x.dot(&w.t());
    let t = adapter.map(|a| {
        let t = x.dot(&a.a.t());
        y.scaled_add(scale, &t.dot(&a.b.t()));
        t
    });
    (y, t)
}

fn project_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    adapter: Option<&Adapter>,
    t: Option<&Array2<f64>>,
    scale: f64,
    grad: Option<&mut Adapter>,
) -> Array2<f64> {
    let mut dx = dy.dot(w);
    if let (Some(a), Some(t)) = (adapter, t) {
        let dyb = dy.dot(&a.b);
        dx.scaled_add(scale, &dyb.dot(&a.a));
        if let Some(g) = grad {
            g.b.scaled_add(scale, &dy.t().dot(t));
            g.a.scaled_add(scale, &dyb.t().dot(x));
        }
    }
    dx
}

struct BlockCache {
    n1: NormCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    tq: Option<Array2<f64>>,
    tk: Option<Array2<f64>>,
    tv: Option<Array2<f64>>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    to: Option<Array2<f64>>,
    n2: NormCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    tu: Option<Array2<f64>>,
    act: Array2<f64>,
    td: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace {
    token_positions: Vec<(usize, usize)>,
    video_start: usize,
    video: std::sync::Arc<VideoInput>,
    spatial_trace: Option<MlpTrace>,
    temporal_trace: Option<MlpTrace>,
    blocks: Vec<BlockCache>,
    final_norm: NormCache,
    final_hidden: Array2<f64>,
}

impl ForwardTrace {
    /// Attention probabilities `(seq, seq)` of `head` in `layer`.
    pub fn attention(&self, layer: usize, head: usize) -> ArrayView2<'_, f64> {
        self.blocks[layer].probs[head].view()
    }

    pub fn layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn heads(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.probs.len())
    }

    pub fn video_start(&self) -> usize {
        self.video_start
    }
}

fn softmax_causal(scores: &mut Array2<f64>) {
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if j <= i {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
}

impl StagedModel {
    fn project_video(&self, video: &VideoInput) -> Result<(Array2<f64>, Option<MlpTrace>, Option<MlpTrace>)> {
        let d = self.config.dim;
        let mut rows = Array2::zeros((video.rows(), d));
        let mut st = None;
        let mut tt = None;
        if video.spatial_per_segment > 0 {
            let f = self.spatial_proj.as_ref().ok_or_else(|| Error::Config("video has spatial rows but no spatial projector".into()))?;
            let (y, trace) = f.forward_traced(&video.spatial)?;
            for (i, r) in y.rows().into_iter().enumerate() {
                rows.row_mut(video.spatial_row(i)).assign(&r);
            }
            st = Some(trace);
        }
        if video.temporal_per_segment > 0 {
            let g = self.temporal_proj.as_ref().ok_or_else(|| Error::Config("video has temporal rows but no temporal projector".into()))?;
            let (y, trace) = g.forward_traced(&video.temporal)?;
            for (j, r) in y.rows().into_iter().enumerate() {
                rows.row_mut(video.temporal_row(j)).assign(&r);
            }
            tt = Some(trace);
        }
        Ok((rows, st, tt))
    }

    /// Logits for every position of `prompt ++ answer`, plus the trace for
    /// backpropagation.
    pub fn forward_traced(&self, prompt: &Prompt, answer: &[usize]) -> Result<(Array2<f64>, ForwardTrace)> {
        self.check_ids(&prompt.before_video)?;
        self.check_ids(&prompt.after_video)?;
        self.check_ids(answer)?;
        let n = prompt.len() + answer.len();
        if n > self.config.max_positions {
            return Err(Error::Shape(format!("sequence of {n} exceeds {} positions", self.config.max_positions)));
        }
        let d = self.config.dim;
        let (video_rows, spatial_trace, temporal_trace) = self.project_video(&prompt.video)?;
        let video_start = prompt.before_video.len();

        let mut x = Array2::zeros((n, d));
        let mut token_positions = Vec::with_capacity(n - video_rows.nrows());
        let after_start = video_start + video_rows.nrows();
        for (i, &id) in prompt.before_video.iter().enumerate() {
            token_positions.push((i, id));
        }
        for (i, &id) in prompt.after_video.iter().chain(answer).enumerate() {
            token_positions.push((after_start + i, id));
        }
        for &(pos, id) in &token_positions {
            x.row_mut(pos).assign(&self.embedding.row(id));
        }
        x.slice_mut(s![video_start..after_start, ..]).assign(&video_rows);
        x += &self.positions.slice(s![..n, ..]);

        let heads = self.config.heads;
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let scale = adapter_scale(self.config.lora_alpha, self.config.lora_rank);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let (h1, n1) = norm_forward(&x, &b.norm1);
            let (q, tq) = project(&h1, &b.wq, self.adapter(l, AdapterTarget::Query), scale);
            let (k, tk) = project(&h1, &b.wk, self.adapter(l, AdapterTarget::Key), scale);
            let (v, tv) = project(&h1, &b.wv, self.adapter(l, AdapterTarget::Value), scale);
            let mut o = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * inv_sqrt;
                softmax_causal(&mut scores);
                o.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let (attn, to) = project(&o, &b.wo, self.adapter(l, AdapterTarget::Output), scale);
            x += &attn;
            let (h2, n2) = norm_forward(&x, &b.norm2);
            let (mut u, tu) = project(&h2, &b.w1, self.adapter(l, AdapterTarget::FfnUp), scale);
            u += &b.b1;
            let act = u.mapv(|z| Activation::Gelu.apply(z));
            let (mut ff, td) = project(&act, &b.w2, self.adapter(l, AdapterTarget::FfnDown), scale);
            ff += &b.b2;
            x += &ff;
            caches.push(BlockCache { n1, h1, q, k, v, tq, tk, tv, probs, o, to, n2, h2, u, tu, act, td });
        }
        let (hf, nf) = norm_forward(&x, &self.final_norm);
        let logits = hf.dot(&self.head.t());
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok((
            logits,
            ForwardTrace {
                token_positions,
                video_start,
                video: prompt.video.clone(),
                spatial_trace,
                temporal_trace,
                blocks: caches,
                final_norm: nf,
                final_hidden: hf,
            },
        ))
    }

    /// Backpropagate `dlogits` into `grad` (same shapes as `self`). Backbone
    /// entries of `grad` are left untouched: they are never trained.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Array2<f64>, grad: &mut StagedModel) {
        let d = self.config.dim;
        let heads = self.config.heads;
        let dh = d / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let scale = adapter_scale(self.config.lora_alpha, self.config.lora_rank);

        grad.head += &dlogits.t().dot(&trace.final_hidden);
        let dhf = dlogits.dot(&self.head);
        let mut dx = norm_backward(&dhf, &self.final_norm, &trace.final_norm);

        for (l, b) in self.blocks.iter().enumerate().rev() {
            let c = &trace.blocks[l];
            // feed-forward
            let dff = &dx;
            let dact = project_backward(
                dff,
                &c.act,
                &b.w2,
                self.adapter(l, AdapterTarget::FfnDown),
                c.td.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::FfnDown),
            );
            let mut du = dact;
            du.zip_mut_with(&c.u, |g, &z| *g *= Activation::Gelu.derivative(z));
            let dh2 = project_backward(
                &du,
                &c.h2,
                &b.w1,
                self.adapter(l, AdapterTarget::FfnUp),
                c.tu.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::FfnUp),
            );
            dx = &dx + &norm_backward(&dh2, &b.norm2, &c.n2);

            // attention
            let d_o = project_backward(
                &dx,
                &c.o,
                &b.wo,
                self.adapter(l, AdapterTarget::Output),
                c.to.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::Output),
            );
            let n = dx.nrows();
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let p = &c.probs[h];
                let doh = d_o.slice(cols);
                let dp = doh.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&doh));
                let row_dot = (&dp * p).sum_axis(Axis(1));
                let ds = (dp - &row_dot.view().insert_axis(Axis(1))) * p * inv_sqrt;
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let mut dh1 = project_backward(
                &dq,
                &c.h1,
                &b.wq,
                self.adapter(l, AdapterTarget::Query),
                c.tq.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::Query),
            );
            dh1 += &project_backward(
                &dk,
                &c.h1,
                &b.wk,
                self.adapter(l, AdapterTarget::Key),
                c.tk.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::Key),
            );
            dh1 += &project_backward(
                &dv,
                &c.h1,
                &b.wv,
                self.adapter(l, AdapterTarget::Value),
                c.tv.as_ref(),
                scale,
                adapter_grad(grad, l, AdapterTarget::Value),
            );
            dx = &dx + &norm_backward(&dh1, &b.norm1, &c.n1);
        }

        for &(pos, id) in &trace.token_positions {
            let mut row = grad.embedding.row_mut(id);
            row += &dx.row(pos);
        }
        let video = &trace.video;
        let vs = trace.video_start;
        if let (Some(f), Some(t)) = (&self.spatial_proj, &trace.spatial_trace) {
            let mut dy = Array2::zeros((video.spatial.nrows(), d));
            for i in 0..video.spatial.nrows() {
                dy.row_mut(i).assign(&dx.row(vs + video.spatial_row(i)));
            }
            f.backward(t, &dy, grad.spatial_proj.as_mut().expect("gradient shapes mirror the model"));
        }
        if let (Some(g), Some(t)) = (&self.temporal_proj, &trace.temporal_trace) {
            let mut dy = Array2::zeros((video.temporal.nrows(), d));
            for j in 0..video.temporal.nrows() {
                dy.row_mut(j).assign(&dx.row(vs + video.temporal_row(j)));
            }
            g.backward(t, &dy, grad.temporal_proj.as_mut().expect("gradient shapes mirror the model"));
        }
    }
}

fn adapter_grad(grad: &mut StagedModel, layer: usize, target: AdapterTarget) -> Option<&mut Adapter> {
    grad.adapters.as_mut().and_then(|a| a[layer].get_mut(&target))
}
