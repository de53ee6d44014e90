//! Branch-specific answer prompts, decoding parameters and the answer
//! envelope carrying provenance.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{Difficulty, GroundingContext, TaskKind};
use crate::llm::{ClientError, GenerationRequest, GenerativeModelClient, TASK_MARKER};
use crate::memory::QaPair;
use crate::router::Pathway;

pub const TASK_ANSWER_DOCUMENT: &str = "answer-document";
pub const TASK_ANSWER_STRUCTURED: &str = "answer-structured";
pub const TASK_ANSWER_WEB: &str = "answer-web";

pub const SLOTS: [&str; 3] = ["{context}", "{memory}", "{question}"];

/// Sentence every web-branch prompt carries.
pub const UNCERTAINTY_INSTRUCTION: &str =
    "State explicitly where the evidence is incomplete, conflicting or uncertain, and do not present web claims as verified facts.";

const DOCUMENT_TEMPLATE: &str = "\
You answer disaster-management questions using the retrieved document passages below.
Synthesize a grounded answer from the passages. Do not add facts the passages do not support, and say so if they do not answer the question.

Passages:
{context}

Earlier conversation:
{memory}

Question: {question}";

const STRUCTURED_TEMPLATE: &str = "\
You answer disaster-data questions using the database rows below.
Summarize the result in plain language. Keep every number exactly as it appears in the rows, and keep the ranking order.

Rows:
{context}

Earlier conversation:
{memory}

Question: {question}";

const WEB_TEMPLATE: &str = "\
You answer a question that the internal knowledge base could not cover, using the web search snippets below.
Synthesize selectively and prefer authoritative sources such as government agencies and research institutions.
{uncertainty}

Snippets:
{context}

Earlier conversation:
{memory}

Question: {question}";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template for {branch} is missing slot {slot}")]
    MissingSlot { branch: Pathway, slot: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub branch: Pathway,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(branch: Pathway, text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for slot in SLOTS {
            if !text.contains(slot) {
                return Err(TemplateError::MissingSlot { branch, slot });
            }
        }
        Ok(PromptTemplate { branch, text })
    }

    fn task(&self) -> &'static str {
        match self.branch {
            Pathway::DocumentRetrieval => TASK_ANSWER_DOCUMENT,
            Pathway::StructuredAccess => TASK_ANSWER_STRUCTURED,
            Pathway::WebFallback => TASK_ANSWER_WEB,
        }
    }
}

/// One template per pathway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub document: PromptTemplate,
    pub structured: PromptTemplate,
    pub web: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        let t = |b, s: &str| PromptTemplate::new(b, s).expect("built-in template");
        Templates {
            document: t(Pathway::DocumentRetrieval, DOCUMENT_TEMPLATE),
            structured: t(Pathway::StructuredAccess, STRUCTURED_TEMPLATE),
            web: t(Pathway::WebFallback, &WEB_TEMPLATE.replace("{uncertainty}", UNCERTAINTY_INSTRUCTION)),
        }
    }
}

impl Templates {
    /// Reads `document.txt`, `structured.txt` and `web.txt` from `dir`;
    /// missing files keep the built-in text. The web template always gets
    /// the uncertainty instruction, prepended if the file leaves it out.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let mut out = Templates::default();
        let read = |name: &str| -> Result<Option<String>, TemplateError> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(std::fs::read_to_string(p)?))
            } else {
                Ok(None)
            }
        };
        if let Some(t) = read("document.txt")? {
            out.document = PromptTemplate::new(Pathway::DocumentRetrieval, t)?;
        }
        if let Some(t) = read("structured.txt")? {
            out.structured = PromptTemplate::new(Pathway::StructuredAccess, t)?;
        }
        if let Some(mut t) = read("web.txt")? {
            if !t.contains(UNCERTAINTY_INSTRUCTION) {
                t = format!("{UNCERTAINTY_INSTRUCTION}\n{t}");
            }
            out.web = PromptTemplate::new(Pathway::WebFallback, t)?;
        }
        Ok(out)
    }

    pub fn for_branch(&self, branch: Pathway) -> &PromptTemplate {
        match branch {
            Pathway::DocumentRetrieval => &self.document,
            Pathway::StructuredAccess => &self.structured,
            Pathway::WebFallback => &self.web,
        }
    }
}

/// `[n] (source) text` lines, one per unit, with inner line breaks flattened.
pub fn render_context(ctx: &GroundingContext) -> String {
    let mut out: Vec<String> = ctx
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| format!("[{}] ({}) {}", i + 1, u.source_id, u.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect();
    if let (Some(sql), Some(rows)) = (&ctx.sql, &ctx.rows) {
        out.insert(0, format!("SQL: {sql}"));
        if rows.row_count > ctx.units.len() {
            out.push(format!("({} of {} rows shown)", ctx.units.len(), rows.row_count));
        }
    }
    if out.is_empty() {
        "(no evidence found)".into()
    } else {
        out.join("\n")
    }
}

pub fn render_memory(pairs: &[QaPair]) -> String {
    pairs
        .iter()
        .map(|p| format!("Q: {}\nA: {}", p.question, p.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills every slot in one pass, so slot-like text inside the evidence is
/// left alone.
fn fill(template: &str, values: [&str; 3]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some((pos, idx)) = SLOTS
        .iter()
        .enumerate()
        .filter_map(|(i, s)| rest.find(s).map(|p| (p, i)))
        .min()
    {
        out.push_str(&rest[..pos]);
        out.push_str(values[idx]);
        rest = &rest[pos + SLOTS[idx].len()..];
    }
    out.push_str(rest);
    out
}

pub fn build_prompt_with(templates: &Templates, ctx: &GroundingContext, memory: &[QaPair], question: &str) -> String {
    let template = templates.for_branch(ctx.branch);
    let body = fill(&template.text, [&render_context(ctx), &render_memory(memory), question]);
    format!("{TASK_MARKER}{}\n{body}", template.task())
}

pub fn build_prompt(ctx: &GroundingContext, memory: &[QaPair], question: &str) -> String {
    build_prompt_with(&Templates::default(), ctx, memory, question)
}

pub const MCQ_TEMPERATURE: f32 = 0.0;
pub const MCQ_MAX_TOKENS: u32 = 16;
pub const OPEN_TEMPERATURE: f32 = 0.7;
pub const INTERACTIVE_MAX_TOKENS: u32 = 400;

/// `(temperature, max_output_tokens)` for a task.
pub fn decoding_for(kind: TaskKind) -> (f32, u32) {
    match kind {
        TaskKind::Mcq => (MCQ_TEMPERATURE, MCQ_MAX_TOKENS),
        TaskKind::OpenEnded(d) => (
            OPEN_TEMPERATURE,
            match d {
                Difficulty::Easy => 80,
                Difficulty::Medium => 180,
                Difficulty::Hard => 300,
                Difficulty::Extreme => 400,
            },
        ),
        TaskKind::Interactive => (OPEN_TEMPERATURE, INTERACTIVE_MAX_TOKENS),
    }
}

pub fn generate_answer<C: GenerativeModelClient + ?Sized>(
    prompt: &str,
    client: &C,
    kind: TaskKind,
) -> Result<String, ClientError> {
    let (t, max) = decoding_for(kind);
    let text = client.generate(&GenerationRequest::new(prompt, t, max))?;
    Ok(text.trim().to_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerEnvelope {
    pub answer_text: String,
    pub pathway: Pathway,
    pub sources: Vec<String>,
    pub degraded: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Provenance strings drawn from the context units.
pub fn sources_of(ctx: &GroundingContext) -> Vec<String> {
    if ctx.branch == Pathway::StructuredAccess {
        if let (Some(sql), Some(rows)) = (&ctx.sql, &ctx.rows) {
            let noun = if rows.row_count == 1 { "row" } else { "rows" };
            return vec![sql.clone(), format!("{} {noun}", rows.row_count)];
        }
    }
    let mut out: Vec<String> = Vec::new();
    for u in &ctx.units {
        if !out.contains(&u.source_id) {
            out.push(u.source_id.clone());
        }
    }
    out
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn respond<C: GenerativeModelClient + ?Sized>(
    templates: &Templates,
    ctx: &GroundingContext,
    memory: &[QaPair],
    question: &str,
    client: &C,
    kind: TaskKind,
) -> Result<AnswerEnvelope, ClientError> {
    let prompt = build_prompt_with(templates, ctx, memory, question);
    let answer_text = generate_answer(&prompt, client, kind)?;
    Ok(AnswerEnvelope {
        answer_text,
        pathway: ctx.branch,
        sources: sources_of(ctx),
        degraded: ctx.degraded || ctx.is_empty(),
        timestamp: now_millis(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextUnit;
    use crate::knowledge::Value;
    use crate::llm::{FailingClient, RecordingClient, ScriptedClient};
    use crate::sql::RowEvidence;

    fn unit(src: &str, text: &str) -> ContextUnit {
        ContextUnit {
            source_id: src.into(),
            text: text.into(),
        }
    }

    fn structured_ctx() -> GroundingContext {
        let mut ctx = GroundingContext::new(
            Pathway::StructuredAccess,
            vec![unit("sql", "zip_code: 77061; MAX(evacuation_rate): 57.14")],
        );
        ctx.sql = Some("SELECT 1".into());
        ctx.rows = Some(RowEvidence {
            columns: vec!["zip_code".into(), "MAX(evacuation_rate)".into()],
            rows: vec![vec![Value::Integer(77061), Value::Real(57.14)]],
            row_count: 1,
        });
        ctx
    }

    #[test]
    fn structured_prompt_keeps_values_verbatim() {
        let p = build_prompt(&structured_ctx(), &[], "Which zip?");
        assert!(p.starts_with("### task: answer-structured\n"));
        assert!(p.contains("77061") && p.contains("57.14"));
    }

    #[test]
    fn web_prompt_carries_uncertainty_instruction() {
        let ctx = GroundingContext::new(Pathway::WebFallback, vec![unit("https://x", "snippet")]);
        assert!(build_prompt(&ctx, &[], "q").contains(UNCERTAINTY_INSTRUCTION));
    }

    #[test]
    fn no_slot_left_unfilled() {
        for branch in [Pathway::DocumentRetrieval, Pathway::StructuredAccess, Pathway::WebFallback] {
            let ctx = GroundingContext::new(branch, vec![unit("s", "evidence mentioning {memory} literally")]);
            let p = build_prompt(&ctx, &[], "q {context}");
            // the only slot-like strings left are the ones we injected as data
            assert_eq!(p.matches("{memory}").count(), 1);
            assert_eq!(p.matches("{context}").count(), 1);
            assert_eq!(p.matches("{question}").count(), 0);
            let clean = build_prompt(&GroundingContext::empty(branch), &[], "q");
            assert!(SLOTS.iter().all(|s| !clean.contains(s)), "{branch}");
        }
    }

    #[test]
    fn memory_rendered_in_order() {
        let pairs = vec![
            QaPair {
                question: "first?".into(),
                answer: "one".into(),
            },
            QaPair {
                question: "second?".into(),
                answer: "two".into(),
            },
        ];
        let ctx = GroundingContext::empty(Pathway::DocumentRetrieval);
        let p = build_prompt(&ctx, &pairs, "third?");
        assert!(p.find("Q: first?").unwrap() < p.find("Q: second?").unwrap());
        assert!(build_prompt(&ctx, &[], "q").contains("Earlier conversation:\n\n"));
    }

    #[test]
    fn decoding_parameters_by_kind() {
        let c = RecordingClient::new(ScriptedClient::new().on_any("", "ok"));
        for (kind, t, max) in [
            (TaskKind::Mcq, 0.0, MCQ_MAX_TOKENS),
            (TaskKind::OpenEnded(Difficulty::Easy), 0.7, 80),
            (TaskKind::OpenEnded(Difficulty::Medium), 0.7, 180),
            (TaskKind::OpenEnded(Difficulty::Hard), 0.7, 300),
            (TaskKind::OpenEnded(Difficulty::Extreme), 0.7, 400),
            (TaskKind::Interactive, 0.7, 400),
        ] {
            c.clear();
            generate_answer("### task: mcq\nq", &c, kind).unwrap();
            let call = &c.calls()[0];
            assert_eq!((call.temperature, call.max_output_tokens), (t, max), "{kind:?}");
        }
    }

    #[test]
    fn envelope_sources() {
        let c = ScriptedClient::new().on_any("", "answer");
        let t = Templates::default();
        let doc = GroundingContext::new(
            Pathway::DocumentRetrieval,
            vec![unit("fema-3", "a"), unit("noaa-1", "b"), unit("usgs-2", "c")],
        );
        let env = respond(&t, &doc, &[], "q", &c, TaskKind::Interactive).unwrap();
        assert_eq!(env.sources, ["fema-3", "noaa-1", "usgs-2"]);
        assert_eq!(env.pathway, Pathway::DocumentRetrieval);
        assert!(!env.degraded);

        let env = respond(&t, &structured_ctx(), &[], "q", &c, TaskKind::Interactive).unwrap();
        assert_eq!(env.sources, ["SELECT 1", "1 row"]);

        let empty = GroundingContext::empty(Pathway::WebFallback);
        let env = respond(&t, &empty, &[], "q", &c, TaskKind::Interactive).unwrap();
        assert!(env.degraded && env.sources.is_empty());
        assert_eq!(env.answer_text, "answer");

        assert!(respond(&t, &doc, &[], "q", &FailingClient, TaskKind::Interactive).is_err());
    }

    #[test]
    fn templates_load_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("document.txt"), "DOC {context} {memory} {question}").unwrap();
        std::fs::write(dir.path().join("web.txt"), "WEB {context} {memory} {question}").unwrap();
        let t = Templates::load_dir(dir.path()).unwrap();
        assert!(t.document.text.starts_with("DOC"));
        assert!(t.web.text.contains(UNCERTAINTY_INSTRUCTION));
        assert_eq!(t.structured, Templates::default().structured);
        std::fs::write(dir.path().join("structured.txt"), "no slots").unwrap();
        assert!(matches!(Templates::load_dir(dir.path()), Err(TemplateError::MissingSlot { .. })));
    }
}
