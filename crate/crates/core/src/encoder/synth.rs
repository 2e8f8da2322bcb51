//! Synthetic stand-in for the frozen image and video encoders.
//!
//! Background features are i.i.d. Gaussian noise. Every frame whose centre
//! time falls inside an event gets that event's signature added to all of its
//! spatial positions: a per-channel `+-amplitude` pattern derived from the
//! caption, so equal captions produce equal signatures across videos.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{partition_segments, EncoderConfig, FeatureMap, SegmentInput};
use crate::codec::GroundedEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { amplitude: 1.0, noise: 0.1 }
    }
}

/// Stable 64-bit seed from text.
pub(crate) fn text_seed(text: &str, salt: &str) -> u64 {
    let digest = Sha256::new().chain_update(salt.as_bytes()).chain_update([0u8]).chain_update(text.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn signature(caption: &str, stream: &str, channels: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(text_seed(caption.trim(), stream));
    (0..channels).map(|_| if rng.random::<bool>() { amplitude } else { -amplitude }).collect()
}

/// Centre time of frame `i` of `frames` in a video of `duration` seconds.
pub fn frame_time(i: usize, frames: usize, duration: f64) -> f64 {
    (i as f64 + 0.5) * duration / frames as f64
}

fn frame_map(
    rng: &mut ChaCha8Rng,
    normal: &Normal<f64>,
    dims: (usize, usize, usize),
    signatures: &[&Vec<f64>],
) -> FeatureMap {
    let mut map = Array3::from_shape_fn(dims, |_| normal.sample(rng));
    for sig in signatures {
        for ((_, _, c), v) in map.indexed_iter_mut() {
            *v += sig[c];
        }
    }
    FeatureMap(map)
}

/// Deterministic per-segment encoder outputs for a video with `events`.
pub fn synth_features(
    seed: u64,
    cfg: &EncoderConfig,
    events: &[GroundedEvent],
    duration: f64,
    params: SynthParams,
) -> Result<Vec<SegmentInput>> {
    cfg.validate()?;
    if !duration.is_finite() || duration <= 0.0 {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    let normal = Normal::new(0.0, params.noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let spatial_sigs: Vec<Vec<f64>> = events
        .iter()
        .map(|e| signature(&e.caption, "spatial", cfg.spatial.map_or(0, |s| s.channels), params.amplitude))
        .collect();
    let temporal_sigs: Vec<Vec<f64>> = events
        .iter()
        .map(|e| signature(&e.caption, "temporal", cfg.temporal.map_or(0, |t| t.channels), params.amplitude))
        .collect();
    let active = |frame: usize| -> Vec<usize> {
        let t = frame_time(frame, cfg.frames, duration);
        events.iter().enumerate().filter(|(_, e)| e.start <= t && t <= e.end).map(|(i, _)| i).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.segments);
    for span in partition_segments(cfg.frames, cfg.segments)? {
        let keyframe = match cfg.spatial {
            Some(s) => {
                let sigs: Vec<&Vec<f64>> = active(span.keyframe).into_iter().map(|i| &spatial_sigs[i]).collect();
                frame_map(&mut rng, &normal, (s.height, s.width, s.channels), &sigs)
            }
            None => FeatureMap::zeros(0, 0, 0),
        };
        let frames = match cfg.temporal {
            Some(t) => span
                .frames
                .clone()
                .map(|f| {
                    let sigs: Vec<&Vec<f64>> = active(f).into_iter().map(|i| &temporal_sigs[i]).collect();
                    frame_map(&mut rng, &normal, (t.height, t.width, t.channels), &sigs)
                })
                .collect(),
            None => Vec::new(),
        };
        out.push(SegmentInput { keyframe, frames });
    }
    Ok(out)
}
