//! Per-frame attention and a projection of the temporal-token embeddings
//! after a short training run. Writes `attention.csv` and `pca.csv` to the
//! current directory.
//!
//! `cargo run --release --example introspection`

use std::path::Path;

use grounded_vtg::curriculum::{train, TaskKind, TrainConfig};
use grounded_vtg::introspect::{adjacency_distances, aggregate_attention, emit_plot_data, pca, temporal_embeddings, video_attention, HeadReduction, PlotData};

fn main() -> grounded_vtg::Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.plans[1].steps = 1500;
    let (model, corpus, _) = train(&cfg, &[1, 2, 3], |_, _| Ok(()))?;

    let sample = corpus.samples_of(TaskKind::SentenceGrounding).next().expect("grounding samples");
    let event = &corpus.videos[sample.video].events[sample.event.unwrap_or(0)];
    let ex = corpus.example(sample, model.vocab.as_ref())?;
    let (_, trace) = model.forward_traced(&ex.prompt, &[])?;
    let row = video_attention(&trace, &ex.prompt, trace.layers() - 1, ex.prompt.len() - 1, HeadReduction::Mean)?;
    let frames = aggregate_attention(&row, &model.encoder)?;
    println!("{:?}\nevent [{:.1}, {:.1}] of {:.1} s", sample.instruction, event.start, event.end, corpus.videos[sample.video].duration);
    for (i, w) in frames.iter().enumerate() {
        println!("frame {i}: {:<50} {w:.4}", "#".repeat((w * 2000.0) as usize));
    }
    emit_plot_data(&PlotData::FrameWeights(&frames), Path::new("attention.csv"))?;

    let rows = temporal_embeddings(&model)?;
    let proj = pca(&rows.view(), 2)?;
    let (near, far) = adjacency_distances(&rows.view(), 5, 100)?;
    println!("\nPCA explained {:.3?}; mean distance at gap <= 5: {near:.3}, gap >= 100: {far:.3}", proj.explained);
    emit_plot_data(&PlotData::Projection(&proj), Path::new("pca.csv"))?;
    Ok(())
}
