use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{sort_scored, Channel, ScoredPassage};

fn normalized(channel: &[ScoredPassage]) -> HashMap<&str, f64> {
    let max = channel
        .iter()
        .map(|s| s.score)
        .filter(|s| *s > 0.0)
        .fold(0.0f64, f64::max);
    if max <= 0.0 {
        return HashMap::new();
    }
    let mut out: HashMap<&str, f64> = HashMap::new();
    for s in channel.iter().filter(|s| s.score > 0.0) {
        let v = s.score / max;
        out.entry(s.passage_id.as_str())
            .and_modify(|cur| *cur = cur.max(v))
            .or_insert(v);
    }
    out
}

/// Equal-weight fusion of max-normalized keyword and vector scores.
///
/// Each channel is divided by its own maximum; a passage missing from a
/// channel contributes 0 there. Non-positive scores (e.g. negative cosine)
/// count as missing, so every merged score lies in (0, 1].
pub fn hybrid_merge(kw: &[ScoredPassage], vec: &[ScoredPassage]) -> Vec<ScoredPassage> {
    let kw = normalized(kw);
    let vec = normalized(vec);
    let mut merged: HashMap<&str, f64> = HashMap::new();
    for (id, s) in &kw {
        *merged.entry(id).or_default() += 0.5 * s;
    }
    for (id, s) in &vec {
        *merged.entry(id).or_default() += 0.5 * s;
    }
    let mut out: Vec<ScoredPassage> = merged
        .into_iter()
        .map(|(id, s)| ScoredPassage::new(id, Channel::Merged, s))
        .collect();
    sort_scored(&mut out);
    out
}

/// Deduplicated, score-sorted top of a retrieval result list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub entries: Vec<ScoredPassage>,
    pub requested: usize,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Keeps the best score per passage, sorts, and truncates to `ir`.
pub fn build_candidate_pool(results: &[ScoredPassage], ir: usize) -> CandidatePool {
    let mut best: HashMap<&str, &ScoredPassage> = HashMap::new();
    for r in results {
        best.entry(r.passage_id.as_str())
            .and_modify(|cur| {
                if r.score > cur.score {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut entries: Vec<ScoredPassage> = best.into_values().cloned().collect();
    sort_scored(&mut entries);
    entries.truncate(ir);
    CandidatePool {
        entries,
        requested: ir,
    }
}
