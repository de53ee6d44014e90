use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{sort_scored, Channel, RetrievalError, ScoredPassage};
use crate::knowledge::Corpus;
use crate::text::analyze;

pub trait EmbeddingClient: Send + Sync {
    /// Stable identifier recorded in index snapshots.
    fn name(&self) -> String;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
}

impl<T: EmbeddingClient + ?Sized> EmbeddingClient for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        (**self).embed(text)
    }
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of terms and character trigrams.
///
/// Deterministic and dependency-free. Text without any term embeds to the
/// zero vector, which has cosine 0 with everything.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashEmbedder { dim }
    }

    fn add(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign * weight;
    }
}

impl EmbeddingClient for HashEmbedder {
    fn name(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut v = vec![0.0; self.dim];
        for term in analyze(text) {
            self.add(&mut v, &term, 1.0);
            let padded: Vec<char> = format!("#{term}#").chars().collect();
            for w in padded.windows(3) {
                let gram: String = w.iter().collect();
                self.add(&mut v, &format!("3:{gram}"), 0.5);
            }
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// OpenAI-compatible embeddings endpoint.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    http: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, dim: usize) -> Self {
        HttpEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            dim,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingClient for HttpEmbedder {
    fn name(&self) -> String {
        format!("http:{}", self.model)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut req = self
            .http
            .post(&self.endpoint)
            .json(&serde_json::json!({"model": self.model, "input": text}));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp: EmbeddingResponse = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| RetrievalError::Embedder(e.to_string()))?;
        let mut v = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RetrievalError::Embedder("empty embedding response".into()))?
            .embedding;
        if v.len() != self.dim {
            return Err(RetrievalError::Embedder(format!(
                "expected dimension {}, got {}",
                self.dim,
                v.len()
            )));
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// One unit vector per passage, scanned exhaustively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub embedder: String,
    pub dimension: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl VectorIndex {
    pub fn build<E: EmbeddingClient + ?Sized>(corpus: &Corpus, embedder: &E) -> Result<Self, RetrievalError> {
        let mut ids = Vec::with_capacity(corpus.count());
        let mut vectors = Vec::with_capacity(corpus.count());
        for p in corpus.passages() {
            let mut v = embedder.embed(&p.text)?;
            l2_normalize(&mut v);
            ids.push(p.id.clone());
            vectors.push(v);
        }
        Ok(VectorIndex {
            embedder: embedder.name(),
            dimension: embedder.dimension(),
            ids,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }
}

/// Top `n` passages by cosine similarity to the embedded query.
pub fn vector_search<E: EmbeddingClient + ?Sized>(
    query: &str,
    n: usize,
    index: &VectorIndex,
    embedder: &E,
) -> Result<Vec<ScoredPassage>, RetrievalError> {
    let q = embedder.embed(query)?;
    if q.len() != index.dimension {
        return Err(RetrievalError::Embedder(format!(
            "query dimension {} does not match index dimension {}",
            q.len(),
            index.dimension
        )));
    }
    let mut hits: Vec<ScoredPassage> = index
        .entries()
        .map(|(id, v)| ScoredPassage::new(id, Channel::Vector, cosine(&q, v)))
        .collect();
    sort_scored(&mut hits);
    hits.truncate(n);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{ingest_passages, RawPassage};

    fn corpus(texts: &[&str]) -> Corpus {
        ingest_passages(texts.iter().enumerate().map(|(i, t)| RawPassage {
            id: format!("p{i}"),
            text: (*t).into(),
            source_id: "s".into(),
            hazard_tags: vec![],
            location_tags: vec![],
        }))
        .unwrap()
    }

    #[test]
    fn hash_embedder_is_unit_and_deterministic() {
        let e = HashEmbedder::default();
        let a = e.embed("storm surge flooding").unwrap();
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, e.embed("storm surge flooding").unwrap());
        assert!(e.embed("!!").unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn self_similarity_is_one() {
        let texts = ["evacuation orders for coastal zones", "wildfire smoke advisory", "shelter capacity"];
        let c = corpus(&texts);
        let e = HashEmbedder::default();
        let idx = VectorIndex::build(&c, &e).unwrap();
        let hits = vector_search(texts[1], 3, &idx, &e).unwrap();
        assert_eq!(hits[0].passage_id, "p1");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn n_beyond_corpus_returns_all() {
        let c = corpus(&["a b", "c d", "e f"]);
        let e = HashEmbedder::default();
        let idx = VectorIndex::build(&c, &e).unwrap();
        assert_eq!(vector_search("a", 50, &idx, &e).unwrap().len(), 3);
    }

    #[test]
    fn matches_exhaustive_cosine() {
        let texts = [
            "storm surge inundation along the coast",
            "flood insurance claims after the hurricane",
            "coastal storm surge warning issued",
            "wildfire evacuation routes",
        ];
        let c = corpus(&texts);
        let e = HashEmbedder::new(64);
        let idx = VectorIndex::build(&c, &e).unwrap();
        let q = "storm surge coast";
        let got: Vec<_> = vector_search(q, 4, &idx, &e)
            .unwrap()
            .into_iter()
            .map(|h| h.passage_id)
            .collect();
        // oracle: embed everything again and sort by raw dot/(|a||b|)
        let qv = e.embed(q).unwrap();
        let mut oracle: Vec<(f64, String)> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v = e.embed(t).unwrap();
                let dot: f64 = qv.iter().zip(&v).map(|(a, b)| a * b).sum();
                (dot, format!("p{i}"))
            })
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let want: Vec<_> = oracle.into_iter().map(|(_, id)| id).collect();
        assert_eq!(got, want);
    }
}
