//! Okapi BM25 over an in-process inverted index.
//!
//! ```text
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · tf(t, D) · (k1 + 1) / (tf(t, D) + k1 · (1 − b + b · |D| / avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Query terms are de-duplicated before scoring. The `1 +` inside the
//! logarithm keeps idf positive, so any matching term contributes a
//! positive score.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{sort_scored, Channel, ScoredPassage};
use crate::knowledge::Corpus;
use crate::text::analyze;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub params: Bm25Params,
    ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Self {
        Self::build_with(corpus, Bm25Params::default())
    }

    pub fn build_with(corpus: &Corpus, params: Bm25Params) -> Self {
        let mut ids = Vec::with_capacity(corpus.count());
        let mut doc_lengths = Vec::with_capacity(corpus.count());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, passage) in corpus.passages().iter().enumerate() {
            let terms = analyze(&passage.text);
            ids.push(passage.id.clone());
            doc_lengths.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if ids.is_empty() {
            0.0
        } else {
            total as f64 / ids.len() as f64
        };
        InvertedIndex {
            params,
            ids,
            doc_lengths,
            avg_doc_length,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 scores of every passage matching at least one query term.
    pub fn scores(&self, query: &str) -> HashMap<&str, f64> {
        let Bm25Params { k1, b } = self.params;
        let mut acc: HashMap<u32, f64> = HashMap::new();
        let mut seen = HashSet::new();
        for term in analyze(query) {
            if !seen.insert(term.clone()) {
                continue;
            }
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let tf = p.tf as f64;
                let len_ratio = self.doc_lengths[p.doc as usize] as f64 / self.avg_doc_length;
                let s = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio));
                *acc.entry(p.doc).or_default() += s;
            }
        }
        acc.into_iter()
            .map(|(doc, s)| (self.ids[doc as usize].as_str(), s))
            .collect()
    }
}

/// Top `n` passages by BM25, descending, ties by ascending id.
pub fn keyword_search(query: &str, n: usize, index: &InvertedIndex) -> Vec<ScoredPassage> {
    let mut hits: Vec<ScoredPassage> = index
        .scores(query)
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(id, score)| ScoredPassage::new(id, Channel::Keyword, score))
        .collect();
    sort_scored(&mut hits);
    hits.truncate(n);
    hits
}
