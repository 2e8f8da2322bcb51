/// Similarity of a candidate caption to a reference, in [0, 1].
pub trait CaptionScorer: Sync {
    fn score(&self, candidate: &str, reference: &str) -> f64;
}

impl<F: Fn(&str, &str) -> f64 + Sync> CaptionScorer for F {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        self(candidate, reference)
    }
}

/// METEOR-style unigram score: recall-weighted harmonic mean
/// `10PR / (R + 9P)` times `1 - 0.5 (chunks / matches)^3`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChunkedUnigram;

impl CaptionScorer for ChunkedUnigram {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        caption_sim(candidate, reference)
    }
}

/// Lowercase word tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Align each candidate token to an unused equal reference token, preferring
/// the position right after the previous match so runs stay contiguous.
/// Returns the reference position of each matched candidate token.
fn align(cand: &[String], refs: &[String]) -> Vec<Option<usize>> {
    let mut used = vec![false; refs.len()];
    let mut prev: Option<usize> = None;
    let mut out = Vec::with_capacity(cand.len());
    for w in cand {
        let next = prev.map(|p| p + 1).filter(|&j| j < refs.len() && !used[j] && refs[j] == *w);
        let pick = next.or_else(|| (0..refs.len()).find(|&j| !used[j] && refs[j] == *w));
        if let Some(j) = pick {
            used[j] = true;
        }
        prev = pick;
        out.push(pick);
    }
    out
}

pub fn caption_sim(candidate: &str, reference: &str) -> f64 {
    let cand = tokens(candidate);
    let refs = tokens(reference);
    let alignment = align(&cand, &refs);
    let matches = alignment.iter().flatten().count();
    if matches == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &alignment {
        match (prev, a) {
            (Some(p), Some(j)) if *j == p + 1 => {}
            (_, Some(_)) => chunks += 1,
            _ => {}
        }
        prev = *a;
    }
    let p = matches as f64 / cand.len() as f64;
    let r = matches as f64 / refs.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks as f64 / matches as f64;
    fmean * (1.0 - 0.5 * frag.powi(3))
}
