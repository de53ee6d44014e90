//! Structured access: schema-aware text-to-SQL, an allow-list guard and
//! in-process execution over the loaded tables.

mod ast;
mod exec;
mod lexer;
mod parser;
mod prompt;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{execute_sql, ExecutionError, RowEvidence};
pub use parser::{parse_select, ParseError};
pub use prompt::{build_sql_prompt, SqlPrompt, DOMAIN_MAPPINGS, TASK_TEXT_TO_SQL};
pub use validate::{validate_sql, RejectReason, ValidatedSql, Verdict};

use crate::context::{ContextUnit, GroundingContext};
use crate::knowledge::StructuredStore;
use crate::llm::{ClientError, GenerationRequest, GenerativeModelClient};
use crate::router::Pathway;
use crate::text::truncate_tokens;
use crate::context::UNIT_TOKENS;
use crate::understanding::StructuredQueryRepresentation;

pub const SQL_TEMPERATURE: f32 = 0.0;
pub const SQL_MAX_TOKENS: u32 = 256;
/// Rows rendered as context units; the full result stays on `rows`.
pub const MAX_ROW_UNITS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslationFailed {
    #[error("model call failed: {0}")]
    Client(#[from] ClientError),
    #[error("model returned no SQL")]
    Empty,
}

/// Asks the model for SQL and strips code fences and leading prose.
pub fn generate_sql<C: GenerativeModelClient + ?Sized>(
    prompt: &SqlPrompt,
    client: &C,
) -> Result<String, TranslationFailed> {
    let req = GenerationRequest::new(prompt.to_string(), SQL_TEMPERATURE, SQL_MAX_TOKENS);
    let raw = client.generate(&req)?;
    let sql = extract_sql(&raw);
    if sql.is_empty() {
        return Err(TranslationFailed::Empty);
    }
    Ok(sql)
}

/// Body of the first fenced block if there is one; otherwise everything
/// from the first line that opens with a SQL keyword.
pub fn extract_sql(raw: &str) -> String {
    let text = raw.trim();
    let body = match text.find("```") {
        Some(start) => {
            let after = &text[start + 3..];
            // skip an info string such as `sql`
            let after = after.split_once('\n').map_or(after, |(_, rest)| rest);
            after.find("```").map_or(after, |end| &after[..end])
        }
        None => text,
    };
    let lines: Vec<&str> = body.lines().collect();
    let first = lines.iter().position(|l| {
        let w = l.trim_start().split(|c: char| !c.is_ascii_alphabetic()).next().unwrap_or("");
        w.eq_ignore_ascii_case("select") || w.eq_ignore_ascii_case("with") || parser::is_statement_keyword(w)
    });
    match first {
        Some(i) => lines[i..].join("\n").trim().to_owned(),
        None => body.trim().to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum RedirectReason {
    TranslationFailed(String),
    Rejected(RejectReason),
    ExecutionFailed(String),
}

impl fmt::Display for RedirectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedirectReason::TranslationFailed(d) => write!(f, "translation failed: {d}"),
            RedirectReason::Rejected(r) => write!(f, "rejected: {r}"),
            RedirectReason::ExecutionFailed(d) => write!(f, "execution failed: {d}"),
        }
    }
}

/// Hand-off to the web fallback branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackRedirect {
    pub sqr: StructuredQueryRepresentation,
    pub reason: RedirectReason,
    /// The statement that was attempted, if any.
    pub sql: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredOutcome {
    Grounded(GroundingContext),
    Redirect(FallbackRedirect),
}

pub fn row_text(columns: &[String], row: &[crate::knowledge::Value]) -> String {
    columns
        .iter()
        .zip(row)
        .map(|(c, v)| format!("{c}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn structured_answer_flow<C: GenerativeModelClient + ?Sized>(
    sqr: &StructuredQueryRepresentation,
    store: &StructuredStore,
    client: &C,
) -> StructuredOutcome {
    let redirect = |reason, sql| {
        tracing::info!(?reason, "structured access redirected to web fallback");
        StructuredOutcome::Redirect(FallbackRedirect {
            sqr: sqr.clone(),
            reason,
            sql,
        })
    };
    let prompt = build_sql_prompt(sqr, store);
    let raw = match generate_sql(&prompt, client) {
        Ok(s) => s,
        Err(e) => return redirect(RedirectReason::TranslationFailed(e.to_string()), None),
    };
    let validated = validate_sql(&raw, store);
    if let Verdict::Rejected(r) = &validated.verdict {
        return redirect(RedirectReason::Rejected(r.clone()), Some(validated.statement));
    }
    let evidence = match execute_sql(&validated, store) {
        Ok(ev) => ev,
        Err(e) => return redirect(RedirectReason::ExecutionFailed(e.to_string()), Some(validated.statement)),
    };
    let units = evidence
        .rows
        .iter()
        .take(MAX_ROW_UNITS)
        .map(|r| ContextUnit {
            source_id: "sql".into(),
            text: truncate_tokens(&row_text(&evidence.columns, r), UNIT_TOKENS),
        })
        .collect();
    let mut ctx = GroundingContext::new(Pathway::StructuredAccess, units);
    ctx.sql = Some(validated.statement);
    ctx.rows = Some(evidence);
    StructuredOutcome::Grounded(ctx)
}
