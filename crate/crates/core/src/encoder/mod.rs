//! Segment-wise two-stream video encoding.
//!
//! A video of `T` frames is split into `K` equal segments. Each segment
//! contributes the pooled features of its middle frame (spatial stream)
//! followed by the pooled features of all its `T/K` frames (temporal stream),
//! each projected to the model width `D`:
//!
//! ```text
//! F_seg = [ f(pool(keyframe, sigma_s)) ; g(pool(frame_1, sigma_t)) ; ... ; g(pool(frame_T/K, sigma_t)) ]
//! F_vid = [ F_seg_1 ; ... ; F_seg_K ]      rows = K * (N_s + (T/K) * N_t)
//! ```

mod bundle;
mod mlp;
mod pool;
mod synth;

use std::ops::Range;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use bundle::{read_bundle, write_bundle};
pub use mlp::{mlp_forward, Activation, Linear, Mlp, MlpTrace};
pub use pool::{avg_pool_2d, FeatureMap};
pub use synth::{synth_features, SynthParams};
pub(crate) use synth::text_seed;

use crate::error::{Error, Result};

/// Feature-map geometry and pooling kernel of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pool: usize,
}

impl StreamDims {
    /// Tokens per frame after pooling.
    pub fn tokens(&self) -> usize {
        (self.height / self.pool) * (self.width / self.pool)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.pool == 0 {
            return Err(Error::Config(format!("{name} stream dims must be positive")));
        }
        if self.height % self.pool != 0 || self.width % self.pool != 0 {
            return Err(Error::Config(format!(
                "{name} pool size {} does not divide {}x{}",
                self.pool, self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Either stream may be disabled to express the single-stream ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub frames: usize,
    pub segments: usize,
    pub spatial: Option<StreamDims>,
    pub temporal: Option<StreamDims>,
    pub model_dim: usize,
}

impl EncoderConfig {
    /// T=96, K=12, 24x24 keyframe maps pooled by 2, 16x16 frame maps pooled
    /// by 4. Channel widths are nominal (CLIP ViT-L, InternVideo2-1B, Phi-3.5).
    pub fn standard() -> Self {
        Self {
            frames: 96,
            segments: 12,
            spatial: Some(StreamDims { height: 24, width: 24, channels: 1024, pool: 2 }),
            temporal: Some(StreamDims { height: 16, width: 16, channels: 1408, pool: 4 }),
            model_dim: 3072,
        }
    }

    /// Spatial stream only, every one of the 96 frames pooled by 4.
    pub fn without_temporal_dense() -> Self {
        Self {
            frames: 96,
            segments: 96,
            spatial: Some(StreamDims { height: 24, width: 24, channels: 1024, pool: 4 }),
            temporal: None,
            model_dim: 3072,
        }
    }

    /// Spatial stream only, 24 frames pooled by 2.
    pub fn without_temporal_sparse() -> Self {
        Self {
            frames: 24,
            segments: 24,
            spatial: Some(StreamDims { height: 24, width: 24, channels: 1024, pool: 2 }),
            temporal: None,
            model_dim: 3072,
        }
    }

    /// Temporal stream only, 14 frames without pooling.
    pub fn without_spatial() -> Self {
        Self {
            frames: 14,
            segments: 14,
            spatial: None,
            temporal: Some(StreamDims { height: 16, width: 16, channels: 1408, pool: 1 }),
            model_dim: 3072,
        }
    }

    /// Desk-scale configuration used by the toy decoder: 24 video rows.
    pub fn toy() -> Self {
        Self {
            frames: 8,
            segments: 4,
            spatial: Some(StreamDims { height: 4, width: 4, channels: 8, pool: 2 }),
            temporal: Some(StreamDims { height: 2, width: 2, channels: 8, pool: 2 }),
            model_dim: 32,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.segments == 0 || self.model_dim == 0 {
            return Err(Error::Config("frames, segments and model_dim must be positive".into()));
        }
        if self.frames % self.segments != 0 {
            return Err(Error::Config(format!(
                "{} segments do not evenly divide {} frames",
                self.segments, self.frames
            )));
        }
        if self.spatial.is_none() && self.temporal.is_none() {
            return Err(Error::Config("at least one stream must be enabled".into()));
        }
        if let Some(s) = &self.spatial {
            s.validate("spatial")?;
        }
        if let Some(t) = &self.temporal {
            t.validate("temporal")?;
        }
        Ok(())
    }

    pub fn frames_per_segment(&self) -> usize {
        self.frames / self.segments
    }

    /// N_S (0 when the spatial stream is disabled).
    pub fn spatial_tokens(&self) -> usize {
        self.spatial.map_or(0, |s| s.tokens())
    }

    /// N_T (0 when the temporal stream is disabled).
    pub fn temporal_tokens(&self) -> usize {
        self.temporal.map_or(0, |t| t.tokens())
    }

    /// Rows contributed by one segment: `N_S + (T/K) * N_T`.
    pub fn segment_rows(&self) -> usize {
        self.spatial_tokens() + self.frames_per_segment() * self.temporal_tokens()
    }
}

/// `K * (N_S + (T/K) * N_T)`: rows of the video soft prompt.
pub fn token_budget(cfg: &EncoderConfig) -> usize {
    cfg.segments * cfg.segment_rows()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpan {
    pub frames: Range<usize>,
    /// Global index of the keyframe.
    pub keyframe: usize,
}

impl SegmentSpan {
    pub fn local_keyframe(&self) -> usize {
        self.keyframe - self.frames.start
    }
}

/// Split `T` frames into `K` contiguous equal segments. The keyframe is the
/// floor of each segment's midpoint.
pub fn partition_segments(frames: usize, segments: usize) -> Result<Vec<SegmentSpan>> {
    if segments == 0 || frames == 0 || frames % segments != 0 {
        return Err(Error::Config(format!("{segments} segments do not evenly divide {frames} frames")));
    }
    let len = frames / segments;
    Ok((0..segments)
        .map(|s| SegmentSpan { frames: s * len..(s + 1) * len, keyframe: s * len + len / 2 })
        .collect())
}

/// Raw encoder outputs for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInput {
    pub keyframe: FeatureMap,
    pub frames: Vec<FeatureMap>,
}

/// Pooled and flattened features of one segment, ready for projection.
/// Pooling has no parameters so these can be computed once per video.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSegment {
    /// `(N_S, D_S)`; empty when the spatial stream is disabled.
    pub spatial: Array2<f64>,
    /// `((T/K) * N_T, D_T)`, frames in chronological order.
    pub temporal: Array2<f64>,
}

pub fn pool_segment(input: &SegmentInput, cfg: &EncoderConfig) -> Result<PooledSegment> {
    let spatial = match &cfg.spatial {
        Some(s) => {
            input.keyframe.check(s.height, s.width, s.channels, "keyframe features")?;
            avg_pool_2d(&input.keyframe, s.pool)?.flatten()
        }
        None => Array2::zeros((0, 0)),
    };
    let temporal = match &cfg.temporal {
        Some(t) => {
            if input.frames.len() != cfg.frames_per_segment() {
                return Err(Error::Shape(format!(
                    "segment has {} frames, expected {}",
                    input.frames.len(),
                    cfg.frames_per_segment()
                )));
            }
            let mut pooled = Vec::with_capacity(input.frames.len());
            for frame in &input.frames {
                frame.check(t.height, t.width, t.channels, "frame features")?;
                pooled.push(avg_pool_2d(frame, t.pool)?.flatten());
            }
            let views: Vec<ArrayView2<f64>> = pooled.iter().map(|m| m.view()).collect();
            concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?
        }
        None => Array2::zeros((0, 0)),
    };
    Ok(PooledSegment { spatial, temporal })
}

/// Project pooled features: spatial rows first, then temporal rows.
pub fn project_segment(pooled: &PooledSegment, cfg: &EncoderConfig, f: Option<&Mlp>, g: Option<&Mlp>) -> Result<Array2<f64>> {
    let mut parts = Vec::with_capacity(2);
    if cfg.spatial.is_some() {
        let f = f.ok_or_else(|| Error::Config("spatial stream enabled but no spatial projector".into()))?;
        parts.push(f.forward(&pooled.spatial)?);
    }
    if cfg.temporal.is_some() {
        let g = g.ok_or_else(|| Error::Config("temporal stream enabled but no temporal projector".into()))?;
        parts.push(g.forward(&pooled.temporal)?);
    }
    for p in &parts {
        if p.ncols() != cfg.model_dim {
            return Err(Error::Shape(format!("projector emits {} columns, model dim is {}", p.ncols(), cfg.model_dim)));
        }
    }
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|m| m.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// F_seg for one segment.
pub fn encode_segment(input: &SegmentInput, cfg: &EncoderConfig, f: Option<&Mlp>, g: Option<&Mlp>) -> Result<Array2<f64>> {
    project_segment(&pool_segment(input, cfg)?, cfg, f, g)
}

/// Fused video representation with its row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatureBundle {
    /// F_vid, `(K * (N_S + (T/K) * N_T), D)`.
    pub video: Array2<f64>,
    pub segments: usize,
    pub spatial_tokens: usize,
    pub temporal_tokens: usize,
    pub frames_per_segment: usize,
}

impl VideoFeatureBundle {
    pub fn segment_rows(&self) -> usize {
        self.spatial_tokens + self.frames_per_segment * self.temporal_tokens
    }

    /// F_seg of segment `s`.
    pub fn segment(&self, s: usize) -> ArrayView2<'_, f64> {
        let rows = self.segment_rows();
        self.video.slice(ndarray::s![s * rows..(s + 1) * rows, ..])
    }
}

pub fn encode_video(inputs: &[SegmentInput], cfg: &EncoderConfig, f: Option<&Mlp>, g: Option<&Mlp>) -> Result<VideoFeatureBundle> {
    cfg.validate()?;
    if inputs.len() != cfg.segments {
        return Err(Error::Shape(format!("got {} segments, config expects {}", inputs.len(), cfg.segments)));
    }
    let encoded = inputs.iter().map(|s| encode_segment(s, cfg, f, g)).collect::<Result<Vec<_>>>()?;
    let views: Vec<ArrayView2<f64>> = encoded.iter().map(|m| m.view()).collect();
    let video = concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(VideoFeatureBundle {
        video,
        segments: cfg.segments,
        spatial_tokens: cfg.spatial_tokens(),
        temporal_tokens: cfg.temporal_tokens(),
        frames_per_segment: cfg.frames_per_segment(),
    })
}
