use super::*;
use crate::codec::GroundedEvent;

fn iv(a: f64, b: f64) -> Interval {
    Interval::new(a, b).unwrap()
}

fn ev(a: f64, b: f64, c: &str) -> GroundedEvent {
    GroundedEvent::new(a, b, c)
}

#[test]
fn iou_hand_cases() {
    assert_eq!(interval_iou(&iv(0.0, 2.0), &iv(0.0, 2.0)), 1.0);
    assert_eq!(interval_iou(&iv(0.0, 2.0), &iv(2.0, 4.0)), 0.0);
    assert_eq!(interval_iou(&iv(2.0, 6.0), &iv(4.0, 8.0)), 2.0 / 6.0);
    assert_eq!(interval_iou(&iv(3.0, 3.0), &iv(3.0, 3.0)), 1.0);
    assert_eq!(interval_iou(&iv(3.0, 3.0), &iv(4.0, 4.0)), 0.0);
    assert_eq!(interval_iou(&iv(3.0, 3.0), &iv(0.0, 5.0)), 0.0);
}

#[test]
fn iop_hand_cases() {
    assert_eq!(interval_iop(&iv(1.0, 2.0), &iv(0.0, 5.0)), 1.0);
    assert_eq!(interval_iop(&iv(0.0, 1.0), &iv(3.0, 5.0)), 0.0);
    assert_eq!(interval_iop(&iv(0.0, 4.0), &iv(2.0, 6.0)), 0.5);
    assert_eq!(interval_iop(&iv(3.0, 3.0), &iv(2.0, 6.0)), 1.0);
    assert_eq!(interval_iop(&iv(7.0, 7.0), &iv(2.0, 6.0)), 0.0);
}

#[test]
fn invalid_intervals() {
    assert!(matches!(Interval::new(3.0, 1.0), Err(Error::Ordering(_))));
    assert!(matches!(Interval::new(f64::NAN, 1.0), Err(Error::NonFinite(_))));
}

#[test]
fn recall_suite_single_pair() {
    // [0,6] vs [0,10]: 6/10.
    let s = recall_suite(&[(iv(0.0, 6.0), iv(0.0, 10.0))], &RECALL_THRESHOLDS).unwrap();
    assert_eq!(s.recalls, vec![(0.3, 1.0), (0.5, 1.0), (0.7, 0.0)]);
    assert!((s.miou - 0.6).abs() < 1e-15);
    assert_eq!(s.recall_at(0.7), Some(0.0));
    assert!(matches!(recall_suite(&[], &RECALL_THRESHOLDS), Err(Error::EmptyInput(_))));
}

fn gqa(pred: &str, gold: &str, p: Interval, g: Vec<Interval>) -> GqaRecord {
    GqaRecord { id: "q".into(), predicted: pred.into(), gold: gold.into(), pred_interval: p, gold_intervals: g }
}

#[test]
fn acc_at_gqa_is_a_conjunction() {
    // IoP 0.6, 0.4 and 1.0 against [0, 10].
    let ok = gqa("B", "B", iv(4.0, 14.0), vec![iv(0.0, 10.0)]);
    let weak = gqa("B", "B", iv(6.0, 16.0), vec![iv(0.0, 10.0)]);
    let wrong = gqa("A", "B", iv(1.0, 2.0), vec![iv(0.0, 10.0)]);
    assert!((ok.iop() - 0.6).abs() < 1e-12 && ok.grounded_success());
    assert!((weak.iop() - 0.4).abs() < 1e-12 && !weak.grounded_success());
    assert_eq!(wrong.iop(), 1.0);
    assert!(!wrong.grounded_success());
    assert_eq!(acc_at_gqa(&[ok, weak, wrong]).unwrap(), 1.0 / 3.0);
    assert!(acc_at_gqa(&[]).is_err());
}

#[test]
fn gqa_uses_best_gold_span() {
    let r = gqa("c.", "C", iv(10.0, 12.0), vec![iv(0.0, 5.0), iv(9.0, 13.0)]);
    assert!(r.answer_correct());
    assert_eq!(r.iop(), 1.0);
    assert_eq!(r.iou(), 0.5);
}

#[test]
fn caption_sim_formula() {
    let four = "a man opens door";
    assert!((caption_sim(four, four) - (1.0 - 0.5 / 64.0)).abs() < 1e-15);
    assert_eq!(caption_sim("cat", "dog"), 0.0);
    assert_eq!(caption_sim("", "dog"), 0.0);
    // Candidate "a b" vs reference "a b c d": P = 1, R = 0.5, one chunk of two.
    let f = 10.0 * 0.5 / (0.5 + 9.0);
    assert!((caption_sim("a b", "a b c d") - f * (1.0 - 0.5 / 8.0)).abs() < 1e-15);
    assert_ne!(caption_sim("a b", "a b c d"), caption_sim("a b c d", "a b"));
    // Swapped word order: two chunks over two matches.
    assert!((caption_sim("b a", "a b") - 0.5).abs() < 1e-15);
    assert_eq!(caption_sim("The Dog.", "the dog"), caption_sim("the dog", "the dog"));
}

#[test]
fn scorer_trait_accepts_closures() {
    let one = |_: &str, _: &str| 1.0;
    let preds = [ev(0.0, 2.0, "x")];
    assert_eq!(meteor_at_tiou(&preds, &preds, &TIOU_THRESHOLDS, &one).unwrap(), 1.0);
    assert_eq!(soda_c(&preds, &preds, &one).unwrap().f1, 1.0);
}

#[test]
fn meteor_threshold_changes_matching() {
    // gt [0,10]; preds at IoU 0.8 ([0,8]) and 0.4 ([0,4]).
    let gts = [iv(0.0, 10.0)];
    let preds = [iv(0.0, 4.0), iv(0.0, 8.0)];
    assert_eq!(greedy_tiou_matches(&preds, &gts, 0.3), vec![(1, 0)]);
    assert_eq!(greedy_tiou_matches(&preds, &gts, 0.9), vec![]);
    let gts2 = [iv(0.0, 10.0), iv(0.0, 4.5)];
    // Pred 0 vs gt 1 has IoU 0.889, pred 1 vs gt 0 has 0.8.
    assert_eq!(greedy_tiou_matches(&preds, &gts2, 0.3), vec![(0, 1), (1, 0)]);
    assert_eq!(greedy_tiou_matches(&preds, &gts2, 0.85), vec![(0, 1)]);

    let g = [ev(0.0, 10.0, "dog runs")];
    let p = [ev(0.0, 4.0, "cat sits"), ev(0.0, 8.0, "dog runs")];
    let s = ChunkedUnigram.score("dog runs", "dog runs");
    // Matched at 0.3, 0.5 and 0.7; nothing at 0.9.
    assert!((meteor_at_tiou(&p, &g, &TIOU_THRESHOLDS, &ChunkedUnigram).unwrap() - 3.0 * s / 4.0).abs() < 1e-15);
    assert_eq!(meteor_at_tiou(&[ev(20.0, 30.0, "dog runs")], &g, &TIOU_THRESHOLDS, &ChunkedUnigram).unwrap(), 0.0);
}

#[test]
fn soda_identical_and_disjoint() {
    let one = |_: &str, _: &str| 1.0;
    let gts = [ev(0.0, 2.0, "a"), ev(3.0, 5.0, "b"), ev(6.0, 9.0, "c")];
    let s = soda_c(&gts, &gts, &one).unwrap();
    assert_eq!(s.f1, 1.0);
    assert_eq!(s.matches, vec![(0, 0), (1, 1), (2, 2)]);
    let far = [ev(20.0, 22.0, "a"), ev(23.0, 25.0, "b")];
    assert_eq!(soda_c(&far, &gts, &one).unwrap().f1, 0.0);
    assert_eq!(soda_c(&[], &gts, &one).unwrap().f1, 0.0);
}

#[test]
fn soda_respects_order() {
    let one = |_: &str, _: &str| 1.0;
    // Crossing pairs cannot both be kept.
    let preds = [ev(0.0, 10.0, "x"), ev(10.0, 20.0, "y")];
    let gts = [ev(10.0, 20.0, "y"), ev(10.0, 20.0, "z")];
    let s = soda_c(&preds, &gts, &one).unwrap();
    assert_eq!(s.total, 1.0);
    // The tie goes to the earlier gt.
    assert_eq!(s.matches, vec![(1, 0)]);
    let unsorted = [ev(5.0, 6.0, "x"), ev(1.0, 2.0, "y")];
    assert!(matches!(soda_c(&unsorted, &gts, &one), Err(Error::Ordering(_))));
}

#[test]
fn report_key_sets() {
    let g = GroundingReport { r_at_03: 1.0, r_at_05: 1.0, r_at_07: 0.0, miou: 0.6 };
    let v = serde_json::to_value(MetricReport::Grounding(g)).unwrap();
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["R@0.3", "R@0.5", "R@0.7", "mIoU"]);
}
