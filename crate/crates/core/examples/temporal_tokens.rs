//! Timestamps to temporal tokens and back, and grounded text.
//!
//! `cargo run --example temporal_tokens`

use grounded_vtg::codec::{parse_grounded_text, render_grounded_text, timestamp_to_token, token_to_timestamp, vocab_layout, GroundedEvent};

fn main() -> grounded_vtg::Result<()> {
    let (duration, chunks) = (82.73, 300);
    for tau in [0.0, 0.83, 19.86, 56.26, 82.73] {
        let t = timestamp_to_token(tau, duration, chunks)?;
        let back = token_to_timestamp(t, chunks, duration)?;
        println!("{tau:>6.2} s -> <{t}> -> {back:.3} s (error {:.3}, bound {:.3})", (back - tau).abs(), duration / (2.0 * chunks as f64));
    }

    // 32000 base words, then <0>..<300>, then the three markers.
    let vocab = vocab_layout(32000, chunks)?;
    println!("vocabulary: {} total, temporal ids {:?}", vocab.total_size(), vocab.temporal_ids());

    let events = [
        GroundedEvent::new(0.83, 19.86, "A young woman is seen standing in a room and leads into her dancing"),
        GroundedEvent::new(17.37, 60.81, "The girl dances around the room while the camera captures her movements"),
        GroundedEvent::new(56.26, 79.42, "She continues dancing around the room and ends by laying on the floor"),
    ];
    let text = render_grounded_text(&events, duration, &vocab)?;
    println!("\n{text}\n");
    for e in parse_grounded_text(&text, &vocab, duration)?.events {
        println!("[{:6.2}, {:6.2}] {}", e.start, e.end, e.caption);
    }
    Ok(())
}
