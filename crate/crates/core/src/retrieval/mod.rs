//! Document branch: initial retrieval (keyword, vector or hybrid), candidate
//! pool, reranking and context assembly.

mod bm25;
mod fusion;
mod rerank;
mod vector;

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{keyword_search, Bm25Params, InvertedIndex, Posting};
pub use fusion::{build_candidate_pool, hybrid_merge, CandidatePool};
pub use rerank::{
    rerank, HttpRerankScorer, OverlapScorer, RerankOutcome, RerankScorer, ScorerError,
    DEFAULT_RERANK_BATCH,
};
pub use vector::{cosine, l2_normalize, vector_search, EmbeddingClient, HashEmbedder, HttpEmbedder, VectorIndex};

use crate::context::{assemble_context, GroundingContext, TaskKind};
use crate::knowledge::Corpus;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedder failed: {0}")]
    Embedder(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("index snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Keyword,
    Vector,
    Merged,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub channel: Channel,
    pub score: f64,
}

impl ScoredPassage {
    pub fn new(passage_id: &str, channel: Channel, score: f64) -> Self {
        ScoredPassage {
            passage_id: passage_id.to_owned(),
            channel,
            score,
        }
    }
}

/// Score descending, then passage id ascending.
pub fn ranking_order(a: &ScoredPassage, b: &ScoredPassage) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
}

pub(crate) fn sort_scored(v: &mut [ScoredPassage]) {
    v.sort_by(ranking_order);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalStrategy {
    Keyword,
    Vector,
    Hybrid,
}

impl RetrievalStrategy {
    pub const ALL: [RetrievalStrategy; 3] = [
        RetrievalStrategy::Keyword,
        RetrievalStrategy::Vector,
        RetrievalStrategy::Hybrid,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RetrievalStrategy::Keyword => "keyword",
            RetrievalStrategy::Vector => "vector",
            RetrievalStrategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for RetrievalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RetrievalStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        RetrievalStrategy::ALL
            .into_iter()
            .find(|st| st.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown retrieval strategy `{s}`"))
    }
}

/// Candidate pool sizes of the evaluation grid.
pub const POOL_SIZES: [usize; 3] = [100, 150, 200];
/// Rerank depths of the evaluation grid.
pub const RERANK_DEPTHS: [usize; 3] = [5, 10, 15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub strategy: RetrievalStrategy,
    pub pool_size: usize,
    pub rerank_k: usize,
    #[serde(default = "default_batch")]
    pub rerank_batch: usize,
}

fn default_batch() -> usize {
    DEFAULT_RERANK_BATCH
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            strategy: RetrievalStrategy::Hybrid,
            pool_size: 100,
            rerank_k: 5,
            rerank_batch: DEFAULT_RERANK_BATCH,
        }
    }
}

impl RetrievalConfig {
    pub fn new(strategy: RetrievalStrategy, pool_size: usize, rerank_k: usize) -> Result<Self, RetrievalError> {
        let cfg = RetrievalConfig {
            strategy,
            pool_size,
            rerank_k,
            rerank_batch: DEFAULT_RERANK_BATCH,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.pool_size == 0 || self.rerank_k == 0 || self.rerank_batch == 0 {
            return Err(RetrievalError::InvalidConfig(
                "pool size, rerank depth and batch must be positive".into(),
            ));
        }
        if self.rerank_k > self.pool_size {
            return Err(RetrievalError::InvalidConfig(format!(
                "rerank depth {} exceeds pool size {}",
                self.rerank_k, self.pool_size
            )));
        }
        Ok(())
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// Keyword and vector indices over one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indices {
    pub version: u32,
    pub inverted: InvertedIndex,
    pub vector: VectorIndex,
}

impl Indices {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let bytes = serde_json::to_vec(self).map_err(|e| RetrievalError::Snapshot(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let bytes = std::fs::read(path)?;
        let idx: Indices =
            serde_json::from_slice(&bytes).map_err(|e| RetrievalError::Snapshot(e.to_string()))?;
        if idx.version != SNAPSHOT_VERSION {
            return Err(RetrievalError::Snapshot(format!(
                "unsupported snapshot version {}",
                idx.version
            )));
        }
        Ok(idx)
    }
}

/// Builds the inverted and vector indices. An embedder failure aborts the
/// vector side only; [`InvertedIndex::build`] can still be used alone.
pub fn build_indices<E: EmbeddingClient + ?Sized>(corpus: &Corpus, embedder: &E) -> Result<Indices, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let inverted = InvertedIndex::build(corpus);
    let vector = VectorIndex::build(corpus, embedder)?;
    Ok(Indices {
        version: SNAPSHOT_VERSION,
        inverted,
        vector,
    })
}

/// Everything the document branch produced for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub pool: CandidatePool,
    pub reranked: Vec<ScoredPassage>,
    pub context: GroundingContext,
}

/// Initial retrieval, pool, rerank and context assembly for one query.
///
/// Under hybrid retrieval both channels fetch `pool_size` results each and
/// run concurrently; the merged list is then cut to `pool_size`.
pub fn retrieve<E, S>(
    query: &str,
    config: &RetrievalConfig,
    indices: &Indices,
    corpus: &Corpus,
    embedder: &E,
    scorer: &S,
    kind: TaskKind,
) -> Result<RetrievalOutcome, RetrievalError>
where
    E: EmbeddingClient + ?Sized,
    S: RerankScorer + ?Sized,
{
    config.validate()?;
    let n = config.pool_size;
    let results = match config.strategy {
        RetrievalStrategy::Keyword => keyword_search(query, n, &indices.inverted),
        RetrievalStrategy::Vector => vector_search(query, n, &indices.vector, embedder)?,
        RetrievalStrategy::Hybrid => {
            let (kw, vec) = rayon::join(
                || keyword_search(query, n, &indices.inverted),
                || vector_search(query, n, &indices.vector, embedder),
            );
            hybrid_merge(&kw, &vec?)
        }
    };
    let pool = build_candidate_pool(&results, n);
    let outcome = rerank(query, &pool, config.rerank_k, scorer, config.rerank_batch, |id| {
        corpus.get(id).map(|p| p.text.as_str())
    });
    let passages: Vec<_> = outcome
        .passages
        .iter()
        .filter_map(|s| corpus.get(&s.passage_id))
        .collect();
    let mut context = assemble_context(&passages, kind);
    context.degraded = outcome.degraded;
    Ok(RetrievalOutcome {
        pool,
        reranked: outcome.passages,
        context,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{ingest_passages, RawPassage};

    fn corpus(n: usize) -> Corpus {
        let topics = ["flood", "hurricane", "wildfire", "tornado", "earthquake"];
        ingest_passages((0..n).map(|i| RawPassage {
            id: format!("p{i:03}"),
            text: format!(
                "{} preparedness note {i} covering shelters and evacuation routes for district {}",
                topics[i % topics.len()],
                i % 7
            ),
            source_id: format!("doc-{}", i % 4),
            hazard_tags: vec![],
            location_tags: vec![],
        }))
        .unwrap()
    }

    #[test]
    fn empty_corpus_rejected() {
        let c = ingest_passages(vec![]).unwrap();
        assert!(matches!(
            build_indices(&c, &HashEmbedder::default()),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn index_sizes() {
        let c = corpus(3);
        let idx = build_indices(&c, &HashEmbedder::default()).unwrap();
        assert_eq!(idx.inverted.len(), 3);
        assert_eq!(idx.vector.len(), 3);
    }

    #[test]
    fn config_invariants() {
        assert!(RetrievalConfig::new(RetrievalStrategy::Keyword, 5, 10).is_err());
        assert!(RetrievalConfig::new(RetrievalStrategy::Keyword, 0, 0).is_err());
        assert!(RetrievalConfig::new(RetrievalStrategy::Keyword, 100, 5).is_ok());
    }

    #[test]
    fn keyword_composition() {
        let c = corpus(10);
        let e = HashEmbedder::default();
        let idx = build_indices(&c, &e).unwrap();
        let cfg = RetrievalConfig::new(RetrievalStrategy::Keyword, 100, 5).unwrap();
        let out = retrieve("flood shelters", &cfg, &idx, &c, &e, &OverlapScorer, TaskKind::Mcq).unwrap();
        assert!(out.context.units.len() <= 5);
        assert!(out.pool.entries.iter().all(|s| s.channel == Channel::Keyword));
        let pool_ids: Vec<_> = out.pool.entries.iter().map(|s| &s.passage_id).collect();
        assert!(out.reranked.iter().all(|s| pool_ids.contains(&&s.passage_id)));
    }

    #[test]
    fn full_grid_runs() {
        let c = corpus(200);
        let e = HashEmbedder::default();
        let idx = build_indices(&c, &e).unwrap();
        for st in RetrievalStrategy::ALL {
            for ir in POOL_SIZES {
                for k in RERANK_DEPTHS {
                    let cfg = RetrievalConfig::new(st, ir, k).unwrap();
                    let out = retrieve("hurricane evacuation routes", &cfg, &idx, &c, &e, &OverlapScorer, TaskKind::Mcq)
                        .unwrap();
                    assert!(out.pool.len() <= ir);
                    assert_eq!(out.reranked.len(), k.min(out.pool.len()));
                }
            }
        }
    }

    #[test]
    fn snapshot_reproduces_scores() {
        let c = corpus(20);
        let e = HashEmbedder::default();
        let idx = build_indices(&c, &e).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        idx.save(&path).unwrap();
        let back = Indices::load(&path).unwrap();
        assert_eq!(back, idx);
        assert_eq!(
            keyword_search("tornado district", 10, &back.inverted),
            keyword_search("tornado district", 10, &idx.inverted)
        );
        assert_eq!(
            vector_search("tornado district", 10, &back.vector, &e).unwrap(),
            vector_search("tornado district", 10, &idx.vector, &e).unwrap()
        );
    }
}
