use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context as _, Result};
use hazardline::config::Config;
use hazardline::eval::synthetic::synthetic_suite;
use hazardline::eval::{run_grid, GridReport, GridSpec, KeypointJudge, ModelJudge, OracleJudge, TaskSet};
use hazardline::retrieval::{
    build_indices, HashEmbedder, OverlapScorer, RetrievalStrategy, POOL_SIZES, RERANK_DEPTHS,
};
use hazardline::{QueryResponse, SessionMemory};

/// Builds keyword and vector indices for the configured corpus and writes
/// the snapshot. Returns the number of passages indexed.
pub fn index(config: &Config) -> Result<usize> {
    let corpus = hazardline::knowledge::read_corpus_jsonl(&config.corpus)?;
    let embedder = config.embedder()?;
    let indices = build_indices(&corpus, embedder.as_ref())?;
    if let Some(dir) = config.indices.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    indices.save(&config.indices)?;
    Ok(corpus.count())
}

/// One turn on a fresh session.
pub fn query_once(config: &Config, text: &str) -> Result<QueryResponse> {
    let engine = config.build_engine()?;
    let mut memory = SessionMemory::new(engine.memory_window)?;
    Ok(engine.handle_query(&mut memory, text)?)
}

pub fn render_trace(r: &QueryResponse) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "trace:       {}", r.trace_id);
    let _ = writeln!(out, "rewritten:   {}", r.rewritten_query);
    let _ = writeln!(out, "query type:  {:?}", r.query_type);
    let _ = writeln!(out, "pathway:     {}", r.pathway);
    if r.evidence_pathway != r.pathway {
        let _ = writeln!(out, "evidence:    {}", r.evidence_pathway);
    }
    if let Some(reason) = &r.redirect_reason {
        let _ = writeln!(out, "redirected:  {reason}");
    }
    if let Some(sql) = &r.sql {
        let _ = writeln!(out, "sql:         {sql}");
    }
    if r.degraded {
        let _ = writeln!(out, "degraded:    yes");
    }
    let _ = writeln!(out, "sources:");
    for s in &r.sources {
        let _ = writeln!(out, "  - {s}");
    }
    let _ = writeln!(out, "\n{}", r.answer_text);
    out
}

/// Empty selections mean the full default axis.
pub fn grid_spec(strategies: &[RetrievalStrategy], pool_sizes: &[usize], depths: &[usize]) -> GridSpec {
    let pick = |given: &[usize], all: &[usize]| if given.is_empty() { all.to_vec() } else { given.to_vec() };
    GridSpec {
        strategies: if strategies.is_empty() {
            RetrievalStrategy::ALL.to_vec()
        } else {
            strategies.to_vec()
        },
        pool_sizes: pick(pool_sizes, &POOL_SIZES),
        depths: pick(depths, &RERANK_DEPTHS),
    }
}

/// Sweeps the seeded synthetic suite with offline clients.
pub fn eval_synthetic(seed: u64, spec: &GridSpec) -> Result<GridReport> {
    let suite = synthetic_suite(seed);
    let embedder = HashEmbedder::default();
    let indices = build_indices(&suite.corpus, &embedder)?;
    Ok(run_grid(
        &suite.tasks,
        &indices,
        &suite.corpus,
        &embedder,
        &OverlapScorer,
        &suite.model,
        &OracleJudge,
        spec,
    ))
}

/// Sweeps task files against the configured corpus and clients.
pub fn eval_tasks(
    config: &Config,
    mcq: Option<&Path>,
    open_ended: Option<&Path>,
    model_judge: bool,
    spec: &GridSpec,
) -> Result<GridReport> {
    let tasks = TaskSet::load(mcq, open_ended)?;
    if tasks.is_empty() {
        bail!("no evaluation items: pass --mcq and/or --open-ended");
    }
    let engine = config.build_engine()?;
    let Some(indices) = &engine.indices else {
        bail!("no index snapshot at {}; run `hazardline index` first", config.indices.display());
    };
    let judge: Box<dyn KeypointJudge> = if model_judge {
        Box::new(ModelJudge {
            client: Arc::clone(&engine.model),
        })
    } else {
        Box::new(OracleJudge)
    };
    Ok(run_grid(
        &tasks,
        indices,
        &engine.corpus,
        engine.embedder.as_ref(),
        engine.scorer.as_ref(),
        engine.model.as_ref(),
        judge.as_ref(),
        spec,
    ))
}
