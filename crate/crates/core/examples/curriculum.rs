//! Three-stage training of the toy decoder on synthetic grounding data,
//! next to the run that skips temporal-token alignment.
//!
//! `cargo run --release --example curriculum`

use std::time::Instant;

use grounded_vtg::curriculum::{mean_task_loss, temporal_exact_match, train, TaskKind, TrainConfig};
use grounded_vtg::lm::Reduction;

fn main() -> grounded_vtg::Result<()> {
    let cfg = TrainConfig::default();
    for stages in [&[1, 2, 3][..], &[1, 3]] {
        let t0 = Instant::now();
        let (model, corpus, log) = train(&cfg, stages, |_, s| {
            println!("  stage {} done: {} steps, last batch loss {:.4}", s.stage, s.steps.len(), s.final_loss().unwrap_or(f64::NAN));
            Ok(())
        })?;
        let em = temporal_exact_match(&model, &corpus, TaskKind::SentenceGrounding)?;
        let loss = mean_task_loss(&model, &corpus, TaskKind::SentenceGrounding, Reduction::Sum)?;
        println!(
            "stages {stages:?}{}: grounding loss {loss:.4}, temporal tokens matched {:.1}%, items exact {}/{} ({:.1?})\n",
            if log.alignment_skipped { " (no alignment)" } else { "" },
            100.0 * em.token_rate(),
            em.exact_items,
            em.items,
            t0.elapsed()
        );
    }
    Ok(())
}
