//! Query understanding: rewrite the request against recent turns, label it,
//! then pull out disaster and location tags.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use tracing::warn;

use crate::llm::{GenerationRequest, GenerativeModelClient, TASK_MARKER};
use crate::memory::{QaPair, SessionMemory, REWRITE_TURNS};

pub const TASK_REWRITE: &str = "query-rewrite";
pub const TASK_CLASSIFY: &str = "query-classify";
pub const TASK_TAGS: &str = "entity-tags";

pub const REWRITE_TEMPERATURE: f32 = 0.3;
pub const REWRITE_MAX_TOKENS: u32 = 100;
pub const LABEL_TEMPERATURE: f32 = 0.0;
pub const LABEL_MAX_TOKENS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    Quantitative,
    Descriptive,
    Explanatory,
    Locational,
    Contextual,
    Other,
}

impl QueryType {
    pub const ALL: [QueryType; 6] = [
        QueryType::Quantitative,
        QueryType::Descriptive,
        QueryType::Explanatory,
        QueryType::Locational,
        QueryType::Contextual,
        QueryType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            QueryType::Quantitative => "quantitative",
            QueryType::Descriptive => "descriptive",
            QueryType::Explanatory => "explanatory",
            QueryType::Locational => "locational",
            QueryType::Contextual => "contextual",
            QueryType::Other => "other",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for QueryType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        QueryType::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// Disaster and location references. Entries are lowercased and trimmed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTags {
    pub disaster_types: Vec<String>,
    pub locations: Vec<String>,
}

fn normalize_list(items: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        let t = item.trim().to_lowercase();
        if !t.is_empty() && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

impl EntityTags {
    pub fn new(disaster_types: Vec<String>, locations: Vec<String>) -> Self {
        EntityTags {
            disaster_types,
            locations,
        }
        .normalized()
    }

    /// Lowercased, trimmed, de-duplicated (first occurrence kept).
    pub fn normalized(self) -> Self {
        EntityTags {
            disaster_types: normalize_list(self.disaster_types),
            locations: normalize_list(self.locations),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.disaster_types.is_empty() && self.locations.is_empty()
    }

    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.disaster_types.iter().chain(&self.locations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQueryRepresentation {
    pub original_query: String,
    pub rewritten_query: String,
    pub query_type: QueryType,
    pub is_ambiguous: bool,
    pub is_domain_relevant: bool,
    pub entity_tags: EntityTags,
    /// Set when rewriting fell back to the original query after a client failure.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rewrite {
    pub query: String,
    pub degraded: bool,
}

pub fn rewrite_prompt(query: &str, turns: &[QaPair]) -> String {
    let mut history = String::new();
    for (i, t) in turns.iter().enumerate() {
        history.push_str(&format!("Q{}: {}\nA{}: {}\n", i + 1, t.question, i + 1, t.answer));
    }
    format!(
        "{TASK_MARKER}{TASK_REWRITE}\n\
         Rewrite the follow-up question so it can be understood without the conversation.\n\
         Replace pronouns and implicit references (\"it\", \"there\", \"this event\", \"those counties\")\n\
         with the explicit disaster events, places and quantities they refer to.\n\
         Return only the rewritten question on one line.\n\n\
         Conversation:\n{history}\n\
         Follow-up question: {query}\n"
    )
}

/// Resolves references in `query` against up to three prior turns.
///
/// With no prior turns the model is not called and `query` comes back
/// verbatim. A failed or empty model reply also yields `query`, flagged
/// as degraded.
pub fn rewrite_query<C: GenerativeModelClient + ?Sized>(
    query: &str,
    turns: &[QaPair],
    client: &C,
) -> Rewrite {
    if turns.is_empty() {
        return Rewrite {
            query: query.to_owned(),
            degraded: false,
        };
    }
    let recent = &turns[turns.len().saturating_sub(REWRITE_TURNS)..];
    let req = GenerationRequest::new(
        rewrite_prompt(query, recent),
        REWRITE_TEMPERATURE,
        REWRITE_MAX_TOKENS,
    );
    match client.generate(&req) {
        Ok(text) => match first_line(&text) {
            Some(line) => Rewrite {
                query: line,
                degraded: false,
            },
            None => {
                warn!("empty rewrite; keeping original query");
                Rewrite {
                    query: query.to_owned(),
                    degraded: true,
                }
            }
        },
        Err(e) => {
            warn!(error = %e, "rewrite failed; keeping original query");
            Rewrite {
                query: query.to_owned(),
                degraded: true,
            }
        }
    }
}

fn first_line(text: &str) -> Option<String> {
    text.lines()
        .map(|l| l.trim().trim_matches('"').trim())
        .find(|l| !l.is_empty())
        .map(str::to_owned)
}

pub fn classify_prompt(rewritten: &str) -> String {
    format!(
        "{TASK_MARKER}{TASK_CLASSIFY}\n\
         Classify the disaster-information request.\n\
         Types: quantitative (numbers, counts, rankings or aggregates from records), \
         descriptive (definitions, procedures, factual summaries), \
         explanatory (causes and interpretation), \
         locational (place-specific conditions), \
         contextual (depends on earlier conversation), \
         other.\n\
         AMBIGUOUS=1 if the request is underspecified. \
         DOMAIN=1 if it can be answered from disaster management documents or disaster records; \
         DOMAIN=0 for anything else, including requests to build predictive models or simulations.\n\
         Answer with exactly one line: TYPE=<type>;AMBIGUOUS=<0|1>;DOMAIN=<0|1>\n\n\
         Request: {rewritten}\n"
    )
}

static LABEL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)TYPE\s*=\s*([a-z]+)\s*;\s*AMBIGUOUS\s*=\s*([01])\s*;\s*DOMAIN\s*=\s*([01])")
        .unwrap()
});

/// Parses `TYPE=<label>;AMBIGUOUS=<0|1>;DOMAIN=<0|1>` from model output.
pub fn parse_label_line(text: &str) -> Option<(QueryType, bool, bool)> {
    let caps = LABEL_LINE.captures(text)?;
    let ty = caps[1].parse().ok()?;
    Some((ty, &caps[2] == "1", &caps[3] == "1"))
}

/// Labels a rewritten query as `(type, is_ambiguous, is_domain_relevant)`.
///
/// Unparsable or failed replies become `(Other, ambiguous, in-domain)`.
pub fn classify_query<C: GenerativeModelClient + ?Sized>(
    rewritten: &str,
    client: &C,
) -> (QueryType, bool, bool) {
    let req = GenerationRequest::new(classify_prompt(rewritten), LABEL_TEMPERATURE, LABEL_MAX_TOKENS);
    match client.generate(&req) {
        Ok(text) => parse_label_line(&text).unwrap_or_else(|| {
            warn!(reply = %text, "unparsable classification label");
            (QueryType::Other, true, true)
        }),
        Err(e) => {
            warn!(error = %e, "classification failed");
            (QueryType::Other, true, true)
        }
    }
}

pub fn tags_prompt(rewritten: &str) -> String {
    format!(
        "{TASK_MARKER}{TASK_TAGS}\n\
         List the disaster types or named events and the geographic locations mentioned in the request.\n\
         Answer with exactly one line: DISASTERS=<comma-separated or none>;LOCATIONS=<comma-separated or none>\n\n\
         Request: {rewritten}\n"
    )
}

static TAG_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)DISASTERS\s*=\s*([^;\n]*);\s*LOCATIONS\s*=\s*([^\n]*)").unwrap()
});

fn split_tags(field: &str) -> Vec<String> {
    field
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("none"))
        .map(str::to_owned)
        .collect()
}

pub fn parse_tag_line(text: &str) -> Option<EntityTags> {
    let caps = TAG_LINE.captures(text)?;
    Some(EntityTags::new(split_tags(&caps[1]), split_tags(&caps[2])))
}

/// Extracts normalized tags; failures yield empty tags.
pub fn extract_entity_tags<C: GenerativeModelClient + ?Sized>(
    rewritten: &str,
    client: &C,
) -> EntityTags {
    let req = GenerationRequest::new(tags_prompt(rewritten), LABEL_TEMPERATURE, LABEL_MAX_TOKENS);
    match client.generate(&req) {
        Ok(text) => parse_tag_line(&text).unwrap_or_default(),
        Err(e) => {
            warn!(error = %e, "entity tagging failed");
            EntityTags::default()
        }
    }
}

/// Runs rewrite, classify and tag in order against the session's memory.
pub fn understand<C: GenerativeModelClient + ?Sized>(
    query: &str,
    memory: &SessionMemory,
    client: &C,
) -> StructuredQueryRepresentation {
    let hint = memory.tags_mentioned_in(query);
    let turns = memory.retrieve(&hint, REWRITE_TURNS);
    let rewrite = rewrite_query(query, &turns, client);
    let (query_type, is_ambiguous, is_domain_relevant) = classify_query(&rewrite.query, client);
    let entity_tags = extract_entity_tags(&rewrite.query, client);
    StructuredQueryRepresentation {
        original_query: query.to_owned(),
        rewritten_query: rewrite.query,
        query_type,
        is_ambiguous,
        is_domain_relevant,
        entity_tags,
        degraded: rewrite.degraded,
    }
}
