use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::count_tokens;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),
    #[error("passage `{0}` has empty text")]
    EmptyText(String),
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of the corpus JSONL file. Unknown fields are ignored.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
pub struct RawPassage {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source_id: String,
    #[serde(default)]
    pub hazard_tags: Vec<String>,
    #[serde(default)]
    pub location_tags: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
pub struct Passage {
    pub id: String,
    pub source_id: String,
    pub text: String,
    pub hazard_tags: Vec<String>,
    pub location_tags: Vec<String>,
    pub token_count: usize,
}

/// Validated passage collection. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.passages == other.passages
    }
}

impl Corpus {
    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn count(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.by_id.get(id).map(|&i| &self.passages[i])
    }
}

/// Validates raw records into a corpus, computing each passage's token count.
pub fn ingest_passages<I>(records: I) -> Result<Corpus, CorpusError>
where
    I: IntoIterator<Item = RawPassage>,
{
    let mut seen = HashSet::new();
    let mut by_id = HashMap::new();
    let mut passages = Vec::new();
    for raw in records {
        if raw.text.trim().is_empty() {
            return Err(CorpusError::EmptyText(raw.id));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId(raw.id));
        }
        let token_count = count_tokens(&raw.text);
        by_id.insert(raw.id.clone(), passages.len());
        passages.push(Passage {
            id: raw.id,
            source_id: raw.source_id,
            text: raw.text,
            hazard_tags: raw.hazard_tags,
            location_tags: raw.location_tags,
            token_count,
        });
    }
    Ok(Corpus { passages, by_id })
}

/// Reads a JSONL corpus file (blank lines skipped).
pub fn read_corpus_jsonl(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPassage = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Malformed { line: i + 1, source })?;
        records.push(raw);
    }
    ingest_passages(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn raw(id: &str, text: &str) -> RawPassage {
        RawPassage {
            id: id.into(),
            text: text.into(),
            source_id: "fema".into(),
            hazard_tags: vec![],
            location_tags: vec![],
        }
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let c = ingest_passages(vec![]).unwrap();
        assert_eq!(c.count(), 0);
    }

    #[test]
    fn three_records() {
        let c = ingest_passages(vec![raw("a", "x y"), raw("b", "z"), raw("c", "w")]).unwrap();
        assert_eq!(c.count(), 3);
        assert_eq!(c.get("a").unwrap().token_count, 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = ingest_passages(vec![raw("a", "x"), raw("a", "y")]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn blank_text_rejected() {
        let err = ingest_passages(vec![raw("a", "   ")]).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText(_)));
    }

    #[test]
    fn ingest_is_idempotent() {
        let recs = vec![raw("a", "storm surge"), raw("b", "wildfire smoke")];
        assert_eq!(
            ingest_passages(recs.clone()).unwrap(),
            ingest_passages(recs).unwrap()
        );
    }

    #[test]
    fn jsonl_ignores_unknown_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"p1","text":"Flood watch issued","source_id":"noaa","extra":42}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id":"p2","text":"Shelter open","hazard_tags":["hurricane"]}}"#).unwrap();
        let c = read_corpus_jsonl(f.path()).unwrap();
        assert_eq!(c.count(), 2);
        assert_eq!(c.passages()[1].hazard_tags, vec!["hurricane"]);
        assert_eq!(c.passages()[1].source_id, "");
    }
}
