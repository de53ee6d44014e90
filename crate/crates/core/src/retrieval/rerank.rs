use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sort_scored, CandidatePool, Channel, ScoredPassage};
use crate::text::analyze;

pub const DEFAULT_RERANK_BATCH: usize = 128;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("rerank scorer failed: {0}")]
pub struct ScorerError(pub String);

/// Joint query–passage relevance scorer.
pub trait RerankScorer: Send + Sync {
    /// Scores aligned with `passages`.
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError>;
}

impl<T: RerankScorer + ?Sized> RerankScorer for std::sync::Arc<T> {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        (**self).score(query, passages)
    }
}

/// Fraction of distinct query terms present in the passage.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapScorer;

impl OverlapScorer {
    pub fn score_one(query_terms: &HashSet<String>, passage: &str) -> f64 {
        if query_terms.is_empty() {
            return 0.0;
        }
        let terms: HashSet<String> = analyze(passage).into_iter().collect();
        query_terms.intersection(&terms).count() as f64 / query_terms.len() as f64
    }
}

impl RerankScorer for OverlapScorer {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let q: HashSet<String> = analyze(query).into_iter().collect();
        Ok(passages.iter().map(|p| Self::score_one(&q, p)).collect())
    }
}

/// Cross-encoder service speaking `{query, passages[]} → {scores[]}`.
pub struct HttpRerankScorer {
    endpoint: String,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    passages: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

impl HttpRerankScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpRerankScorer {
            endpoint: endpoint.into(),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
        }
    }
}

impl RerankScorer for HttpRerankScorer {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let resp: RerankResponse = self
            .http
            .post(&self.endpoint)
            .json(&RerankRequest { query, passages })
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ScorerError(e.to_string()))?;
        Ok(resp.scores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub passages: Vec<ScoredPassage>,
    /// Scorer failed; `passages` is the pool order cut to `k`.
    pub degraded: bool,
}

/// Scores every pool entry against `query` in batches of `batch` and keeps
/// the best `k`.
///
/// `text_of` resolves a passage id to its text. On scorer failure the pool
/// order truncated to `k` is returned with `degraded` set.
pub fn rerank<'a, S, F>(
    query: &str,
    pool: &CandidatePool,
    k: usize,
    scorer: &S,
    batch: usize,
    text_of: F,
) -> RerankOutcome
where
    S: RerankScorer + ?Sized,
    F: Fn(&str) -> Option<&'a str>,
{
    let batch = batch.max(1);
    let mut scored = Vec::with_capacity(pool.len());
    let mut failed = false;
    for chunk in pool.entries.chunks(batch) {
        let texts: Vec<&str> = chunk
            .iter()
            .map(|e| text_of(&e.passage_id).unwrap_or(""))
            .collect();
        match scorer.score(query, &texts) {
            Ok(scores) if scores.len() == chunk.len() && scores.iter().all(|s| s.is_finite()) => {
                scored.extend(
                    chunk
                        .iter()
                        .zip(scores)
                        .map(|(e, s)| ScoredPassage::new(&e.passage_id, Channel::Reranked, s)),
                );
            }
            Ok(scores) => {
                tracing::warn!(expected = chunk.len(), got = scores.len(), "rerank scores misaligned");
                failed = true;
                break;
            }
            Err(e) => {
                tracing::warn!(error = %e, "rerank failed; using pool order");
                failed = true;
                break;
            }
        }
    }
    if failed {
        return RerankOutcome {
            passages: pool.entries.iter().take(k).cloned().collect(),
            degraded: true,
        };
    }
    sort_scored(&mut scored);
    scored.truncate(k);
    RerankOutcome {
        passages: scored,
        degraded: false,
    }
}
