//! Grounded multiple-choice QA from segment descriptions, with offline
//! clients. Pass `--live` with the `datagen_http.json` environment set to
//! use real endpoints.
//!
//! `cargo run --example qa_datagen`

use grounded_vtg::cli::RunConfig;
use grounded_vtg::datagen::{build_prompt, run_pipeline, synthetic_annotations, DatagenConfig};

fn main() -> grounded_vtg::Result<()> {
    let live = std::env::args().any(|a| a == "--live");
    let cfg = if live {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/datagen_http.json");
        RunConfig::from_json_file(&path)?.datagen.unwrap_or_default()
    } else {
        DatagenConfig { backoff_ms: 0, ..DatagenConfig::default() }
    };
    let annotations = synthetic_annotations(40, 1);
    let prompt = build_prompt(&annotations[0])?;
    println!("last prompt message:\n{}\n", prompt.last().map(|m| m.content.as_str()).unwrap_or_default());

    let (chat, embed) = cfg.clients.build()?;
    let out = run_pipeline(&annotations, chat.as_ref(), embed.as_ref(), &cfg)?;
    println!("stats: {}", serde_json::to_string(&out.stats)?);
    if let Some(r) = out.records.first() {
        for round in &r.rounds {
            println!("\nUSER: {}\nASSISTANT: {}", round.user, round.assistant);
        }
        println!("\noption similarity to the answer: {:.3?}", r.option_similarity);
    }
    Ok(())
}
