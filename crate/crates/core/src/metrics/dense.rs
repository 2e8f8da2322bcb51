use serde::Serialize;

use super::{interval_iou, CaptionScorer, Interval};
use crate::codec::GroundedEvent;
use crate::error::{Error, Result};

/// tIoU thresholds for caption scoring over matched events.
pub const TIOU_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

fn spans(events: &[GroundedEvent]) -> Result<Vec<Interval>> {
    events.iter().map(|e| Interval::new(e.start, e.end)).collect()
}

/// One-to-one pairs `(pred, gt)` taken in descending IoU among those with
/// IoU >= `threshold`. Ties go to the lower pred, then gt, index.
pub fn greedy_tiou_matches(preds: &[Interval], gts: &[Interval], threshold: f64) -> Vec<(usize, usize)> {
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = interval_iou(p, g);
            if iou >= threshold {
                cands.push((i, j, iou));
            }
        }
    }
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut out = Vec::new();
    for (i, j, _) in cands {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Mean over `thresholds` of the mean caption score of greedily matched
/// pairs (0 for a threshold with no match).
pub fn meteor_at_tiou(preds: &[GroundedEvent], gts: &[GroundedEvent], thresholds: &[f64], scorer: &dyn CaptionScorer) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::EmptyInput("no tIoU thresholds".into()));
    }
    let (ps, gs) = (spans(preds)?, spans(gts)?);
    let per: f64 = thresholds
        .iter()
        .map(|&t| {
            let m = greedy_tiou_matches(&ps, &gs, t);
            if m.is_empty() {
                0.0
            } else {
                m.iter().map(|&(i, j)| scorer.score(&preds[i].caption, &gts[j].caption)).sum::<f64>() / m.len() as f64
            }
        })
        .sum();
    Ok(per / thresholds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Soda {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub total: f64,
    pub matches: Vec<(usize, usize)>,
}

fn check_sorted(events: &[GroundedEvent], what: &str) -> Result<()> {
    match events.windows(2).position(|w| w[1].start < w[0].start) {
        Some(k) => Err(Error::Ordering(format!("{what} events not sorted by start at index {}", k + 1))),
        None => Ok(()),
    }
}

/// Storyline F-score: the best order-preserving one-to-one matching under
/// pair score IoU x caption similarity, found by dynamic programming.
pub fn soda_c(preds: &[GroundedEvent], gts: &[GroundedEvent], scorer: &dyn CaptionScorer) -> Result<Soda> {
    check_sorted(preds, "predicted")?;
    check_sorted(gts, "ground-truth")?;
    let (ps, gs) = (spans(preds)?, spans(gts)?);
    let (n, m) = (ps.len(), gs.len());
    let score = |i: usize, j: usize| {
        let iou = interval_iou(&ps[i], &gs[j]);
        if iou > 0.0 {
            iou * scorer.score(&preds[i].caption, &gts[j].caption)
        } else {
            0.0
        }
    };
    let s: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| score(i, j)).collect()).collect();
    let mut dp = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = dp[i - 1][j].max(dp[i][j - 1]).max(dp[i - 1][j - 1] + s[i - 1][j - 1]);
        }
    }
    // Walk back preferring to pair a prediction with the earliest gt that
    // attains the optimum.
    let mut matches = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if dp[i][j] == dp[i][j - 1] {
            j -= 1;
        } else if s[i - 1][j - 1] > 0.0 && dp[i][j] == dp[i - 1][j - 1] + s[i - 1][j - 1] {
            matches.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else {
            i -= 1;
        }
    }
    matches.reverse();
    let total = dp[n][m];
    let precision = if n == 0 { 0.0 } else { total / n as f64 };
    let recall = if m == 0 { 0.0 } else { total / m as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Soda { f1, precision, recall, total, matches })
}
