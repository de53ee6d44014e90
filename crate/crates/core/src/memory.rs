//! Per-session conversational memory: a bounded window of past turns with
//! entity-match-then-recency retrieval.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::understanding::EntityTags;

pub const DEFAULT_WINDOW: usize = 10;
/// Turns handed to query rewriting.
pub const REWRITE_TURNS: usize = 3;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("timestamp {got} is not later than the latest stored turn ({latest})")]
    NonMonotonicTimestamp { latest: u64, got: u64 },
    #[error("window capacity must be positive")]
    ZeroCapacity,
    #[error("memory file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub user_query: String,
    pub answer: String,
    pub entity_tags: EntityTags,
    /// Strictly increasing within a session (microseconds or a logical clock).
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl From<&MemoryEntry> for QaPair {
    fn from(e: &MemoryEntry) -> Self {
        QaPair {
            question: e.user_query.clone(),
            answer: e.answer.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionMemory {
    window: VecDeque<MemoryEntry>,
    capacity: usize,
}

impl Default for SessionMemory {
    fn default() -> Self {
        SessionMemory::new(DEFAULT_WINDOW).unwrap()
    }
}

fn partial_match(stored: &[String], current: &[String]) -> bool {
    stored.iter().any(|s| {
        let s = s.trim().to_lowercase();
        !s.is_empty()
            && current.iter().any(|c| {
                let c = c.trim().to_lowercase();
                !c.is_empty() && (s.contains(&c) || c.contains(&s))
            })
    })
}

impl SessionMemory {
    pub fn new(capacity: usize) -> Result<Self, MemoryError> {
        if capacity == 0 {
            return Err(MemoryError::ZeroCapacity);
        }
        Ok(SessionMemory {
            window: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Oldest first.
    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.window.iter()
    }

    pub fn latest_timestamp(&self) -> Option<u64> {
        self.window.back().map(|e| e.timestamp)
    }

    /// A timestamp later than every stored one: `now` unless the clock lags.
    pub fn next_timestamp(&self, now: u64) -> u64 {
        match self.latest_timestamp() {
            Some(t) if t >= now => t + 1,
            _ => now,
        }
    }

    /// Appends a turn, evicting the oldest once the window is full.
    pub fn store(&mut self, entry: MemoryEntry) -> Result<(), MemoryError> {
        if let Some(latest) = self.latest_timestamp() {
            if entry.timestamp <= latest {
                return Err(MemoryError::NonMonotonicTimestamp {
                    latest,
                    got: entry.timestamp,
                });
            }
        }
        self.window.push_back(entry);
        while self.window.len() > self.capacity {
            self.window.pop_front();
        }
        Ok(())
    }

    /// Up to `m` prior turns as question–answer pairs, oldest first.
    ///
    /// Turns whose stored tags partially match the current disaster or
    /// location tags win (most recent matches first); if none match, the
    /// `m` most recent turns are returned instead.
    pub fn retrieve(&self, tags: &EntityTags, m: usize) -> Vec<QaPair> {
        let mut picked: Vec<&MemoryEntry> = self
            .window
            .iter()
            .rev()
            .filter(|e| {
                partial_match(&e.entity_tags.disaster_types, &tags.disaster_types)
                    || partial_match(&e.entity_tags.locations, &tags.locations)
            })
            .take(m)
            .collect();
        if picked.is_empty() {
            picked = self.window.iter().rev().take(m).collect();
        }
        picked.reverse();
        picked.into_iter().map(QaPair::from).collect()
    }

    /// Stored tags that literally occur in `text` (case-insensitive).
    ///
    /// Lets a new query hit the entity stage of [`retrieve`](Self::retrieve)
    /// before its own tags have been extracted.
    pub fn tags_mentioned_in(&self, text: &str) -> EntityTags {
        let haystack = text.to_lowercase();
        let mut tags = EntityTags::default();
        for e in &self.window {
            for d in &e.entity_tags.disaster_types {
                if !d.is_empty() && haystack.contains(d.as_str()) {
                    tags.disaster_types.push(d.clone());
                }
            }
            for l in &e.entity_tags.locations {
                if !l.is_empty() && haystack.contains(l.as_str()) {
                    tags.locations.push(l.clone());
                }
            }
        }
        tags.normalized()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), MemoryError> {
        for e in &self.window {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a window by replaying stored entries in order.
    pub fn read_jsonl<R: BufRead>(input: R, capacity: usize) -> Result<Self, MemoryError> {
        let mut mem = SessionMemory::new(capacity)?;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            mem.store(serde_json::from_str(&line)?)?;
        }
        Ok(mem)
    }
}
