//! Grounding, grounded QA and dense captioning scores on hand-made records.
//!
//! `cargo run --example grounding_metrics`

use grounded_vtg::codec::GroundedEvent;
use grounded_vtg::metrics::{
    evaluate_dense, evaluate_gqa, evaluate_grounding, greedy_tiou_matches, ChunkedUnigram, DenseRecord, GqaFileRecord, GroundingRecord, Interval,
};

fn main() -> grounded_vtg::Result<()> {
    let g = |id: &str, s, e| GroundingRecord { id: id.into(), start: s, end: e };
    let preds = [g("a", 2.0, 6.0), g("b", 10.0, 20.0), g("c", 0.0, 30.0)];
    let gts = [g("a", 4.0, 8.0), g("b", 11.0, 19.0), g("c", 5.0, 10.0)];
    let e = evaluate_grounding(&preds, &gts)?;
    println!("grounding  {}", serde_json::to_string(&e.report)?);

    let q = |id: &str, ans: &str, s, e| GqaFileRecord { id: id.into(), answer: ans.into(), start: Some(s), end: Some(e), intervals: None };
    // right and inside, right but outside, wrong but inside
    let preds = [q("1", "B", 3.0, 5.0), q("2", "A", 0.0, 4.0), q("3", "C", 3.0, 5.0)];
    let gts = [q("1", "B", 2.0, 8.0), q("2", "A", 3.0, 9.0), q("3", "D", 2.0, 8.0)];
    let e = evaluate_gqa(&preds, &gts)?;
    println!("grounded QA {}", serde_json::to_string(&e.report)?);

    let ev = |s, e, c: &str| GroundedEvent::new(s, e, c);
    let pred = DenseRecord { id: "v".into(), events: vec![ev(0.0, 10.0, "a man opens the door"), ev(12.0, 30.0, "the dog runs")] };
    let gt = DenseRecord { id: "v".into(), events: vec![ev(1.0, 11.0, "a man opens a door"), ev(15.0, 28.0, "a dog runs to the ball")] };
    let spans = |r: &DenseRecord| r.events.iter().map(|e| Interval::new(e.start, e.end)).collect::<grounded_vtg::Result<Vec<_>>>();
    println!("pairs at tIoU 0.5: {:?}", greedy_tiou_matches(&spans(&pred)?, &spans(&gt)?, 0.5));
    let e = evaluate_dense(&[pred], &[gt], &ChunkedUnigram::default())?;
    println!("dense      {}", serde_json::to_string(&e.report)?);
    Ok(())
}
