//! Evaluation: MCQ accuracy, keypoint coverage and the retrieval grid sweep.

mod grid;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{run_grid, CellKey, CellResult, GridReport, GridSpec, ItemOutcome};

use crate::context::{Difficulty, GroundingContext};
use crate::generation::render_context;
use crate::llm::{GenerationRequest, GenerativeModelClient, TASK_MARKER};
use crate::text::fold;

pub const TASK_MCQ: &str = "mcq";
pub const TASK_OPEN_ENDED: &str = "open-ended";
pub const TASK_JUDGE: &str = "keypoint-judge";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn letter(self) -> char {
        match self {
            Choice::A => 'A',
            Choice::B => 'B',
            Choice::C => 'C',
            Choice::D => 'D',
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Choice {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "A" => Ok(Choice::A),
            "B" => Ok(Choice::B),
            "C" => Ok(Choice::C),
            "D" => Ok(Choice::D),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub question: String,
    pub options: BTreeMap<Choice, String>,
    pub gold: Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeItem {
    pub id: String,
    pub question: String,
    pub gold_keypoints: Vec<String>,
    pub difficulty: Difficulty,
}

#[derive(Debug, Error)]
pub enum TaskFileError {
    #[error("item `{0}` must have exactly four options including the gold one")]
    BadOptions(String),
    #[error("item `{0}` has no gold keypoints")]
    NoKeypoints(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A task set: either list may be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    #[serde(default)]
    pub mcq: Vec<McqItem>,
    #[serde(default)]
    pub open_ended: Vec<OeItem>,
}

impl TaskSet {
    pub fn validate(&self) -> Result<(), TaskFileError> {
        for i in &self.mcq {
            if i.options.len() != 4 || !i.options.contains_key(&i.gold) {
                return Err(TaskFileError::BadOptions(i.id.clone()));
            }
        }
        for i in &self.open_ended {
            if i.gold_keypoints.is_empty() {
                return Err(TaskFileError::NoKeypoints(i.id.clone()));
            }
        }
        Ok(())
    }

    /// Reads JSON arrays of MCQ and open-ended items; either path may be absent.
    pub fn load(mcq: Option<&Path>, open_ended: Option<&Path>) -> Result<Self, TaskFileError> {
        let mut set = TaskSet::default();
        if let Some(p) = mcq {
            set.mcq = serde_json::from_slice(&std::fs::read(p)?)?;
        }
        if let Some(p) = open_ended {
            set.open_ended = serde_json::from_slice(&std::fs::read(p)?)?;
        }
        set.validate()?;
        Ok(set)
    }

    pub fn is_empty(&self) -> bool {
        self.mcq.is_empty() && self.open_ended.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("predictions and gold labels differ in length")]
    LengthMismatch,
    #[error("no items to score")]
    EmptyInput,
    #[error("item has no gold keypoints")]
    EmptyKeypoints,
}

/// Share of predictions equal to the gold label; a missing prediction is wrong.
pub fn mcq_accuracy(predictions: &[Option<Choice>], golds: &[Choice]) -> Result<f64, MetricError> {
    if predictions.len() != golds.len() {
        return Err(MetricError::LengthMismatch);
    }
    if golds.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| **p == Some(**g)).count();
    Ok(correct as f64 / golds.len() as f64)
}

/// Decides whether a response supports a keypoint.
pub trait KeypointJudge: Send + Sync {
    fn supported(&self, keypoint: &str, response: &str) -> bool;
}

/// Case-folded, punctuation-stripped containment.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleJudge;

impl KeypointJudge for OracleJudge {
    fn supported(&self, keypoint: &str, response: &str) -> bool {
        let k = fold(keypoint);
        !k.is_empty() && format!(" {} ", fold(response)).contains(&format!(" {k} "))
    }
}

/// Asks a model for a YES/NO verdict per keypoint. Unclear or failed
/// replies count as unsupported.
pub struct ModelJudge<C> {
    pub client: C,
}

impl<C: GenerativeModelClient> KeypointJudge for ModelJudge<C> {
    fn supported(&self, keypoint: &str, response: &str) -> bool {
        let prompt = format!(
            "{TASK_MARKER}{TASK_JUDGE}\nDoes the response semantically support the keypoint? Answer YES or NO.\n\n\
             Keypoint: {keypoint}\nResponse: {response}\n"
        );
        self.client
            .generate(&GenerationRequest::new(prompt, 0.0, 4))
            .map(|r| r.trim().to_ascii_uppercase().starts_with("YES"))
            .unwrap_or(false)
    }
}

pub fn keypoint_coverage<J: KeypointJudge + ?Sized>(
    item: &OeItem,
    response: &str,
    judge: &J,
) -> Result<f64, MetricError> {
    if item.gold_keypoints.is_empty() {
        return Err(MetricError::EmptyKeypoints);
    }
    let hits = item
        .gold_keypoints
        .iter()
        .filter(|k| judge.supported(k, response))
        .count();
    Ok(hits as f64 / item.gold_keypoints.len() as f64)
}

pub fn mean_coverage(per_item: &[f64]) -> Result<f64, MetricError> {
    if per_item.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(per_item.iter().sum::<f64>() / per_item.len() as f64)
}

static STANDALONE_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([ABCD])\b").unwrap());

/// First standalone A, B, C or D in a model reply.
pub fn extract_choice(text: &str) -> Option<Choice> {
    STANDALONE_LETTER
        .captures(text)
        .and_then(|c| c[1].parse().ok())
}

pub fn mcq_prompt(item: &McqItem, ctx: Option<&GroundingContext>) -> String {
    let mut p = format!("{TASK_MARKER}{TASK_MCQ}\n");
    p.push_str("Answer the multiple-choice question about disaster management. Reply with the letter of the correct option only.\n\n");
    if let Some(ctx) = ctx {
        p.push_str(&format!("Context:\n{}\n\n", render_context(ctx)));
    }
    p.push_str(&format!("Question: {}\n", item.question));
    for (c, text) in &item.options {
        p.push_str(&format!("{c}. {text}\n"));
    }
    p
}

pub fn oe_prompt(item: &OeItem, ctx: Option<&GroundingContext>) -> String {
    let mut p = format!("{TASK_MARKER}{TASK_OPEN_ENDED}\n");
    p.push_str("Answer the disaster-management question concisely and completely.\n\n");
    if let Some(ctx) = ctx {
        p.push_str(&format!("Context:\n{}\n\n", render_context(ctx)));
    }
    p.push_str(&format!("Question: {}\n", item.question));
    p
}
