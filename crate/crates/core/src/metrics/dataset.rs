use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use super::{
    acc_at_gqa, meteor_at_tiou, recall_suite, soda_c, CaptionScorer, GqaRecord, Interval, RECALL_THRESHOLDS, TIOU_THRESHOLDS,
};
use crate::codec::GroundedEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Grounding,
    DenseCaptioning,
    Gqa,
}

impl std::str::FromStr for EvalTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grounding" => Ok(EvalTask::Grounding),
            "dense_captioning" => Ok(EvalTask::DenseCaptioning),
            "gqa" => Ok(EvalTask::Gqa),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// Ids may be written as strings or integers.
fn id_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("id must be a string or number, got {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub events: Vec<GroundedEvent>,
}

/// Grounded QA line. Ground truth may list several spans in `intervals`
/// instead of `start`/`end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GqaFileRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
}

impl GqaFileRecord {
    fn spans(&self) -> Result<Vec<Interval>> {
        let mut out = Vec::new();
        if let (Some(s), Some(e)) = (self.start, self.end) {
            out.push(Interval::new(s, e)?);
        } else if self.start.is_some() || self.end.is_some() {
            return Err(Error::Schema(format!("record {}: start and end must appear together", self.id)));
        }
        for [s, e] in self.intervals.iter().flatten() {
            out.push(Interval::new(*s, *e)?);
        }
        if out.is_empty() {
            return Err(Error::Schema(format!("record {} has no interval", self.id)));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    #[serde(rename = "R@0.3")]
    pub r_at_03: f64,
    #[serde(rename = "R@0.5")]
    pub r_at_05: f64,
    #[serde(rename = "R@0.7")]
    pub r_at_07: f64,
    #[serde(rename = "mIoU")]
    pub miou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GqaReport {
    #[serde(rename = "Acc@GQA")]
    pub acc_at_gqa: f64,
    #[serde(rename = "mIoP")]
    pub miop: f64,
    #[serde(rename = "IoP@0.5")]
    pub iop_at_05: f64,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    #[serde(rename = "IoU@0.5")]
    pub iou_at_05: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseReport {
    #[serde(rename = "SODA_c")]
    pub soda_c: f64,
    #[serde(rename = "METEOR")]
    pub meteor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MetricReport {
    Grounding(GroundingReport),
    Gqa(GqaReport),
    Dense(DenseReport),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SampleScore {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soda_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub task: EvalTask,
    pub samples: usize,
    pub report: MetricReport,
    pub per_sample: Vec<SampleScore>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Parse one record per non-blank line; an empty file is a schema error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), k + 1)))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Schema(format!("{} has no records", path.display())));
    }
    Ok(out)
}

/// Pair every ground-truth record with the prediction of the same id, in
/// ground-truth order.
fn align<'a, P, G>(preds: &'a [P], gts: &'a [G], pid: impl Fn(&P) -> &str, gid: impl Fn(&G) -> &str) -> Result<Vec<(&'a P, &'a G)>> {
    if preds.is_empty() || gts.is_empty() {
        return Err(Error::Schema("predictions and ground truth must be non-empty".into()));
    }
    let mut by_id: HashMap<&str, &P> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(pid(p), p).is_some() {
            return Err(Error::Schema(format!("duplicate prediction id {:?}", pid(p))));
        }
    }
    let mut seen = HashSet::with_capacity(gts.len());
    let mut pairs = Vec::with_capacity(gts.len());
    for g in gts {
        let id = gid(g);
        if !seen.insert(id) {
            return Err(Error::Schema(format!("duplicate ground-truth id {id:?}")));
        }
        let p = by_id.get(id).ok_or_else(|| Error::IdMismatch(format!("no prediction for id {id:?}")))?;
        pairs.push((*p, g));
    }
    if let Some(extra) = preds.iter().map(&pid).find(|id| !seen.contains(id)) {
        return Err(Error::IdMismatch(format!("prediction id {extra:?} has no ground truth")));
    }
    Ok(pairs)
}

fn schema(e: Error, id: &str) -> Error {
    match e {
        Error::Schema(_) => e,
        other => Error::Schema(format!("record {id}: {other}")),
    }
}

pub fn evaluate_grounding(preds: &[GroundingRecord], gts: &[GroundingRecord]) -> Result<Evaluation> {
    let pairs = align(preds, gts, |p| &p.id, |g| &g.id)?
        .into_iter()
        .map(|(p, g)| {
            let pi = Interval::new(p.start, p.end).map_err(|e| schema(e, &p.id))?;
            let gi = Interval::new(g.start, g.end).map_err(|e| schema(e, &g.id))?;
            Ok((pi, gi))
        })
        .collect::<Result<Vec<_>>>()?;
    let suite = recall_suite(&pairs, &RECALL_THRESHOLDS)?;
    let report = GroundingReport {
        r_at_03: suite.recalls[0].1,
        r_at_05: suite.recalls[1].1,
        r_at_07: suite.recalls[2].1,
        miou: suite.miou,
    };
    let per_sample = gts.iter().zip(&suite.ious).map(|(g, &iou)| SampleScore { id: g.id.clone(), iou: Some(iou), ..Default::default() }).collect();
    Ok(Evaluation { task: EvalTask::Grounding, samples: gts.len(), report: MetricReport::Grounding(report), per_sample, notes: vec![] })
}

pub fn evaluate_gqa(preds: &[GqaFileRecord], gts: &[GqaFileRecord]) -> Result<Evaluation> {
    let records = align(preds, gts, |p| &p.id, |g| &g.id)?
        .into_iter()
        .map(|(p, g)| {
            let pred = p.spans().map_err(|e| schema(e, &p.id))?;
            if pred.len() != 1 {
                return Err(Error::Schema(format!("prediction {} must give exactly one interval", p.id)));
            }
            Ok(GqaRecord {
                id: g.id.clone(),
                predicted: p.answer.clone(),
                gold: g.answer.clone(),
                pred_interval: pred[0],
                gold_intervals: g.spans().map_err(|e| schema(e, &g.id))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let iops: Vec<f64> = records.iter().map(GqaRecord::iop).collect();
    let ious: Vec<f64> = records.iter().map(GqaRecord::iou).collect();
    let report = GqaReport {
        acc_at_gqa: acc_at_gqa(&records)?,
        miop: iops.iter().sum::<f64>() / n,
        iop_at_05: iops.iter().filter(|&&v| v >= 0.5).count() as f64 / n,
        miou: ious.iter().sum::<f64>() / n,
        iou_at_05: ious.iter().filter(|&&v| v >= 0.5).count() as f64 / n,
    };
    let multi = records.iter().filter(|r| r.gold_intervals.len() > 1).count();
    let notes = if multi > 0 { vec![format!("{multi} records have several gold intervals; IoP and IoU take the best")] } else { vec![] };
    let per_sample = records
        .iter()
        .zip(iops.iter().zip(&ious))
        .map(|(r, (&iop, &iou))| SampleScore {
            id: r.id.clone(),
            iou: Some(iou),
            iop: Some(iop),
            correct: Some(r.answer_correct()),
            ..Default::default()
        })
        .collect();
    Ok(Evaluation { task: EvalTask::Gqa, samples: records.len(), report: MetricReport::Gqa(report), per_sample, notes })
}

fn by_start(events: &[GroundedEvent]) -> Vec<GroundedEvent> {
    let mut v = events.to_vec();
    v.sort_by(|a, b| a.start.total_cmp(&b.start));
    v
}

pub fn evaluate_dense(preds: &[DenseRecord], gts: &[DenseRecord], scorer: &dyn CaptionScorer) -> Result<Evaluation> {
    let pairs = align(preds, gts, |p| &p.id, |g| &g.id)?;
    let per_sample = pairs
        .par_iter()
        .map(|(p, g)| {
            let (pe, ge) = (by_start(&p.events), by_start(&g.events));
            let soda = soda_c(&pe, &ge, scorer).map_err(|e| schema(e, &g.id))?;
            let meteor = meteor_at_tiou(&pe, &ge, &TIOU_THRESHOLDS, scorer).map_err(|e| schema(e, &g.id))?;
            Ok(SampleScore { id: g.id.clone(), soda_c: Some(soda.f1), meteor: Some(meteor), ..Default::default() })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_sample.len() as f64;
    let report = DenseReport {
        soda_c: per_sample.iter().filter_map(|s| s.soda_c).sum::<f64>() / n,
        meteor: per_sample.iter().filter_map(|s| s.meteor).sum::<f64>() / n,
    };
    Ok(Evaluation { task: EvalTask::DenseCaptioning, samples: per_sample.len(), report: MetricReport::Dense(report), per_sample, notes: vec![] })
}

/// Score a prediction file against a ground-truth file, both JSONL.
pub fn evaluate_dataset(task: EvalTask, pred_path: &Path, gt_path: &Path, scorer: &dyn CaptionScorer) -> Result<Evaluation> {
    match task {
        EvalTask::Grounding => evaluate_grounding(&read_jsonl(pred_path)?, &read_jsonl(gt_path)?),
        EvalTask::Gqa => evaluate_gqa(&read_jsonl(pred_path)?, &read_jsonl(gt_path)?),
        EvalTask::DenseCaptioning => evaluate_dense(&read_jsonl(pred_path)?, &read_jsonl(gt_path)?, scorer),
    }
}
