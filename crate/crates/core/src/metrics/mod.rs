//! Temporal grounding metrics.
//!
//! Intervals are in seconds. Zero-length intervals are points, and every
//! metric is total over valid intervals:
//!
//! | metric | degenerate case | value |
//! |---|---|---|
//! | IoU | both the same point | 1 |
//! | IoU | union of length 0, different points | 0 |
//! | IoP | point prediction inside the ground truth | 1 |
//! | IoP | point prediction outside | 0 |
//!
//! Caption scoring goes through [`CaptionScorer`]; [`ChunkedUnigram`] is the
//! built-in stand-in for METEOR (exact lowercase unigram matches, no stemming
//! or synonyms).

mod caption;
mod dataset;
mod dense;

use serde::Serialize;

use crate::error::{Error, Result};

pub use caption::{caption_sim, tokens, CaptionScorer, ChunkedUnigram};
pub use dataset::{
    evaluate_dataset, evaluate_dense, evaluate_gqa, evaluate_grounding, read_jsonl, DenseRecord, DenseReport, EvalTask, Evaluation, GqaFileRecord, GqaReport,
    GroundingRecord, GroundingReport, MetricReport, SampleScore,
};
pub use dense::{greedy_tiou_matches, meteor_at_tiou, soda_c, Soda, TIOU_THRESHOLDS};

/// Recall thresholds for sentence grounding.
pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Closed time span with `start <= end`, both finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    start: f64,
    end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::NonFinite(format!("interval [{start}, {end}]")));
        }
        if start > end {
            return Err(Error::Ordering(format!("interval [{start}, {end}] has start after end")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_point(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

pub fn interval_iou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection(b);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Share of the prediction covered by the ground truth.
pub fn interval_iop(pred: &Interval, gt: &Interval) -> f64 {
    if pred.is_point() {
        return if gt.contains(pred.start) { 1.0 } else { 0.0 };
    }
    pred.intersection(gt) / pred.len()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallSuite {
    /// `(threshold, recall)` in threshold order.
    pub recalls: Vec<(f64, f64)>,
    pub miou: f64,
    pub ious: Vec<f64>,
}

impl RecallSuite {
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        self.recalls.iter().find(|(t, _)| *t == threshold).map(|p| p.1)
    }
}

/// Recall at each IoU threshold and mean IoU over single-span predictions.
pub fn recall_suite(pairs: &[(Interval, Interval)], thresholds: &[f64]) -> Result<RecallSuite> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no prediction/ground-truth pairs".into()));
    }
    let ious: Vec<f64> = pairs.iter().map(|(p, g)| interval_iou(p, g)).collect();
    let n = ious.len() as f64;
    let recalls = thresholds.iter().map(|&t| (t, ious.iter().filter(|&&v| v >= t).count() as f64 / n)).collect();
    Ok(RecallSuite { recalls, miou: ious.iter().sum::<f64>() / n, ious })
}

/// One grounded QA item: chosen option plus the evidence span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GqaRecord {
    pub id: String,
    pub predicted: String,
    pub gold: String,
    pub pred_interval: Interval,
    pub gold_intervals: Vec<Interval>,
}

impl GqaRecord {
    pub fn answer_correct(&self) -> bool {
        normalize_option(&self.predicted) == normalize_option(&self.gold)
    }

    /// Best IoP over the gold spans.
    pub fn iop(&self) -> f64 {
        self.gold_intervals.iter().map(|g| interval_iop(&self.pred_interval, g)).fold(0.0, f64::max)
    }

    /// Best IoU over the gold spans.
    pub fn iou(&self) -> f64 {
        self.gold_intervals.iter().map(|g| interval_iou(&self.pred_interval, g)).fold(0.0, f64::max)
    }

    pub fn grounded_success(&self) -> bool {
        self.answer_correct() && self.iop() >= 0.5
    }
}

fn normalize_option(s: &str) -> String {
    s.trim().trim_end_matches('.').trim().to_lowercase()
}

/// Fraction answered correctly and grounded with IoP >= 0.5.
pub fn acc_at_gqa(records: &[GqaRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no grounded QA records".into()));
    }
    Ok(records.iter().filter(|r| r.grounded_success()).count() as f64 / records.len() as f64)
}

#[cfg(test)]
mod tests;
