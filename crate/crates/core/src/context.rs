//! Branch-tagged evidence handed to response generation, and the token
//! budgets that shape it.

use serde::{Deserialize, Serialize};

use crate::knowledge::Passage;
use crate::router::Pathway;
use crate::sql::RowEvidence;
use crate::text::{count_tokens, truncate_counted};

/// Whole-context cap for multiple-choice prompts.
pub const MCQ_CONTEXT_TOKENS: usize = 6000;
/// Per-unit cap for open-ended and interactive prompts.
pub const UNIT_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mcq,
    OpenEnded(Difficulty),
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextUnit {
    /// Passage source id, `sql` for row evidence, or a URL for web snippets.
    pub source_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingContext {
    pub branch: Pathway,
    pub units: Vec<ContextUnit>,
    pub total_tokens: usize,
    #[serde(default)]
    pub degraded: bool,
    /// Normalized statement behind structured evidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<RowEvidence>,
}

impl GroundingContext {
    pub fn new(branch: Pathway, units: Vec<ContextUnit>) -> Self {
        let total_tokens = units.iter().map(|u| count_tokens(&u.text)).sum();
        GroundingContext {
            branch,
            units,
            total_tokens,
            degraded: false,
            sql: None,
            rows: None,
        }
    }

    pub fn empty(branch: Pathway) -> Self {
        GroundingContext::new(branch, Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Source label of a passage: its `source_id`, or its own id when unset.
fn source_label(p: &Passage) -> String {
    if p.source_id.is_empty() {
        p.id.clone()
    } else {
        p.source_id.clone()
    }
}

/// Assembles reranked passages under the budget for `kind`.
///
/// Multiple-choice contexts keep passages whole while they fit in 6,000
/// tokens, cut the first passage that does not fit down to the remaining
/// budget, and drop everything after it. Open-ended and interactive
/// contexts cut each passage to 512 tokens independently.
pub fn assemble_context(passages: &[&Passage], kind: TaskKind) -> GroundingContext {
    let mut units = Vec::with_capacity(passages.len());
    let mut total = 0;
    let budget = |p: &Passage, max: usize| {
        let (text, n) = truncate_counted(&p.text, max);
        (ContextUnit { source_id: source_label(p), text }, n)
    };
    match kind {
        TaskKind::Mcq => {
            for p in passages {
                if total == MCQ_CONTEXT_TOKENS {
                    break;
                }
                let (unit, n) = budget(p, MCQ_CONTEXT_TOKENS - total);
                total += n;
                units.push(unit);
            }
        }
        TaskKind::OpenEnded(_) | TaskKind::Interactive => {
            for p in passages {
                let (unit, n) = budget(p, UNIT_TOKENS);
                total += n;
                units.push(unit);
            }
        }
    }
    GroundingContext {
        units,
        total_tokens: total,
        ..GroundingContext::empty(Pathway::DocumentRetrieval)
    }
}
