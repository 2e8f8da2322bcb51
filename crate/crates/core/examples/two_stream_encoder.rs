//! Token budgets of the encoder layouts, and one synthetic video encoded
//! with random projectors.
//!
//! `cargo run --example two_stream_encoder`

use grounded_vtg::curriculum::SyntheticVideo;
use grounded_vtg::encoder::{encode_video, synth_features, token_budget, Activation, EncoderConfig, Mlp, SynthParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> grounded_vtg::Result<()> {
    for (name, cfg) in [
        ("two streams", EncoderConfig::standard()),
        ("keyframes at the dense rate", EncoderConfig::without_temporal_dense()),
        ("keyframes at the segment rate", EncoderConfig::without_temporal_sparse()),
        ("frame stream only", EncoderConfig::without_spatial()),
    ] {
        println!(
            "{name:<30} K={:<3} N_S={:<4} N_T={:<3} video rows {}",
            cfg.segments,
            cfg.spatial_tokens(),
            cfg.temporal_tokens(),
            token_budget(&cfg)
        );
    }

    let cfg = EncoderConfig::toy();
    let video = SyntheticVideo::generate("demo", 5);
    println!("\nvideo of {:.2} s:", video.duration);
    for e in &video.events {
        println!("  [{:6.2}, {:6.2}] {}", e.start, e.end, e.caption);
    }
    let inputs = synth_features(5, &cfg, &video.events, video.duration, SynthParams::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut projector = |channels| Mlp::random(&[channels, cfg.model_dim, cfg.model_dim], Activation::Gelu, &mut rng);
    let f = cfg.spatial.as_ref().map(|d| projector(d.channels)).transpose()?;
    let g = cfg.temporal.as_ref().map(|d| projector(d.channels)).transpose()?;
    let bundle = encode_video(&inputs, &cfg, f.as_ref(), g.as_ref())?;
    println!(
        "\nF_vid {:?}: {} segments of {} keyframe rows + {} x {} frame rows",
        bundle.video.dim(),
        bundle.segments,
        bundle.spatial_tokens,
        bundle.frames_per_segment,
        bundle.temporal_tokens
    );
    Ok(())
}
