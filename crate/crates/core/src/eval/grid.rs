use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    extract_choice, keypoint_coverage, mcq_accuracy, mcq_prompt, mean_coverage, oe_prompt, KeypointJudge, TaskSet,
};
use crate::context::TaskKind;
use crate::generation::generate_answer;
use crate::knowledge::Corpus;
use crate::llm::GenerativeModelClient;
use crate::retrieval::{
    retrieve, EmbeddingClient, Indices, RerankScorer, RetrievalConfig, RetrievalStrategy, POOL_SIZES, RERANK_DEPTHS,
};

/// Which strategies, pool sizes and rerank depths to sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub strategies: Vec<RetrievalStrategy>,
    pub pool_sizes: Vec<usize>,
    pub depths: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            strategies: RetrievalStrategy::ALL.to_vec(),
            pool_sizes: POOL_SIZES.to_vec(),
            depths: RERANK_DEPTHS.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn keys(&self) -> Vec<CellKey> {
        let mut out = vec![CellKey::Baseline];
        for &strategy in &self.strategies {
            for &pool_size in &self.pool_sizes {
                for &k in &self.depths {
                    out.push(CellKey::Retrieval { strategy, pool_size, k });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKey {
    Baseline,
    Retrieval {
        strategy: RetrievalStrategy,
        pool_size: usize,
        k: usize,
    },
}

impl CellKey {
    pub fn label(&self) -> String {
        match self {
            CellKey::Baseline => "baseline".into(),
            CellKey::Retrieval { strategy, pool_size, k } => format!("{strategy}/IR={pool_size}/k={k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub response: String,
    /// Extracted letter for MCQ items, coverage for open-ended items.
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub mcq_accuracy: Option<f64>,
    pub oe_coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub mcq_items: Vec<ItemOutcome>,
    pub oe_items: Vec<ItemOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub baseline: CellResult,
    /// Keyed by cell label, in a stable order.
    pub cells: BTreeMap<String, CellResult>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cell<M, J, E, S>(
    key: CellKey,
    tasks: &TaskSet,
    indices: &Indices,
    corpus: &Corpus,
    embedder: &E,
    scorer: &S,
    model: &M,
    judge: &J,
) -> CellResult
where
    M: GenerativeModelClient + ?Sized,
    J: KeypointJudge + ?Sized,
    E: EmbeddingClient + ?Sized,
    S: RerankScorer + ?Sized,
{
    let config = match key {
        CellKey::Baseline => None,
        CellKey::Retrieval { strategy, pool_size, k } => match RetrievalConfig::new(strategy, pool_size, k) {
            Ok(c) => Some(c),
            Err(e) => return failed_cell(key, e.to_string()),
        },
    };
    let context = |question: &str, kind: TaskKind| match &config {
        None => Ok(None),
        Some(c) => retrieve(question, c, indices, corpus, embedder, scorer, kind).map(|o| Some(o.context)),
    };

    let mut mcq_items = Vec::with_capacity(tasks.mcq.len());
    let mut predictions = Vec::with_capacity(tasks.mcq.len());
    for item in &tasks.mcq {
        let ctx = match context(&item.question, TaskKind::Mcq) {
            Ok(c) => c,
            Err(e) => return failed_cell(key, e.to_string()),
        };
        let (response, error) = match generate_answer(&mcq_prompt(item, ctx.as_ref()), model, TaskKind::Mcq) {
            Ok(r) => (r, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let pred = extract_choice(&response);
        predictions.push(pred);
        mcq_items.push(ItemOutcome {
            id: item.id.clone(),
            score: (pred == Some(item.gold)) as u8 as f64,
            response,
            error,
        });
    }

    let mut oe_items = Vec::with_capacity(tasks.open_ended.len());
    let mut coverages = Vec::with_capacity(tasks.open_ended.len());
    for item in &tasks.open_ended {
        let kind = TaskKind::OpenEnded(item.difficulty);
        let ctx = match context(&item.question, kind) {
            Ok(c) => c,
            Err(e) => return failed_cell(key, e.to_string()),
        };
        let (response, error) = match generate_answer(&oe_prompt(item, ctx.as_ref()), model, kind) {
            Ok(r) => (r, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let cov = keypoint_coverage(item, &response, judge).unwrap_or(0.0);
        coverages.push(cov);
        oe_items.push(ItemOutcome {
            id: item.id.clone(),
            response,
            score: cov,
            error,
        });
    }

    let golds: Vec<_> = tasks.mcq.iter().map(|i| i.gold).collect();
    CellResult {
        key,
        mcq_accuracy: mcq_accuracy(&predictions, &golds).ok(),
        oe_coverage: mean_coverage(&coverages).ok(),
        error: None,
        mcq_items,
        oe_items,
    }
}

fn failed_cell(key: CellKey, error: String) -> CellResult {
    tracing::warn!(cell = %key.label(), %error, "grid cell failed");
    CellResult {
        key,
        mcq_accuracy: None,
        oe_coverage: None,
        error: Some(error),
        mcq_items: Vec::new(),
        oe_items: Vec::new(),
    }
}

/// Evaluates the no-retrieval baseline and every cell of `spec`.
///
/// Cells run in parallel; the report does not depend on completion order.
#[allow(clippy::too_many_arguments)]
pub fn run_grid<M, J, E, S>(
    tasks: &TaskSet,
    indices: &Indices,
    corpus: &Corpus,
    embedder: &E,
    scorer: &S,
    model: &M,
    judge: &J,
    spec: &GridSpec,
) -> GridReport
where
    M: GenerativeModelClient + ?Sized,
    J: KeypointJudge + ?Sized,
    E: EmbeddingClient + ?Sized,
    S: RerankScorer + ?Sized,
{
    let mut results: Vec<CellResult> = spec
        .keys()
        .into_par_iter()
        .map(|key| evaluate_cell(key, tasks, indices, corpus, embedder, scorer, model, judge))
        .collect();
    let baseline = results.remove(0);
    GridReport {
        baseline,
        cells: results.into_iter().map(|c| (c.key.label(), c)).collect(),
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub base: f64,
    pub best: f64,
    pub best_config: String,
    pub gain: f64,
}

impl GridReport {
    /// Baseline plus every retrieval cell.
    pub fn cell_count(&self) -> usize {
        self.cells.len() + 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn best_of(&self, metric: &'static str, get: fn(&CellResult) -> Option<f64>) -> Option<SummaryRow> {
        let base = get(&self.baseline)?;
        // first cell in key order wins ties
        let (label, best) = self
            .cells
            .iter()
            .filter_map(|(l, c)| get(c).map(|v| (l, v)))
            .fold(None, |acc: Option<(&String, f64)>, (l, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((l, v)),
            })?;
        Some(SummaryRow {
            metric,
            base,
            best,
            best_config: label.clone(),
            gain: best - base,
        })
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        [
            self.best_of("MCQ accuracy", |c| c.mcq_accuracy),
            self.best_of("OE coverage", |c| c.oe_coverage),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// Aligned text table: metric, base, best, best configuration, gain.
    pub fn summary_table(&self) -> String {
        let rows = self.summary();
        let cfg_w = rows.iter().map(|r| r.best_config.len()).max().unwrap_or(0).max("Best Configuration".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8}  {:<cfg_w$}  {:>13}",
            "Metric", "Base", "Best", "Best Configuration", "Absolute Gain"
        );
        for r in &rows {
            let _ = writeln!(
                out,
                "{:<14} {:>8.4} {:>8.4}  {:<cfg_w$}  {:>+13.4}",
                r.metric, r.base, r.best, r.best_config, r.gain
            );
        }
        out
    }
}
