//! External web fallback: search query formulation, snippet fetching and
//! consistency filtering.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::context::{ContextUnit, GroundingContext, UNIT_TOKENS};
use crate::router::Pathway;
use crate::text::{fold, truncate_tokens};
use crate::understanding::StructuredQueryRepresentation;

pub const DEFAULT_SNIPPET_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebSnippet {
    pub title: String,
    pub url: String,
    #[serde(alias = "snippet")]
    pub snippet_text: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("search failed: {0}")]
pub struct SearchFailure(pub String);

pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, SearchFailure>;
}

impl<T: SearchClient + ?Sized> SearchClient for std::sync::Arc<T> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, SearchFailure> {
        (**self).search(query, limit)
    }
}

/// Returns the same snippets for every query; or fails, when built with `failing`.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearchClient {
    snippets: Vec<WebSnippet>,
    fail: bool,
}

impl FixtureSearchClient {
    pub fn new(snippets: Vec<WebSnippet>) -> Self {
        FixtureSearchClient { snippets, fail: false }
    }

    pub fn failing() -> Self {
        FixtureSearchClient {
            snippets: Vec::new(),
            fail: true,
        }
    }

    /// JSON array of `{title, url, snippet}` objects.
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let snippets = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok(FixtureSearchClient::new(snippets))
    }
}

impl SearchClient for FixtureSearchClient {
    fn search(&self, _query: &str, limit: usize) -> Result<Vec<WebSnippet>, SearchFailure> {
        if self.fail {
            return Err(SearchFailure("fixture configured to fail".into()));
        }
        Ok(self.snippets.iter().take(limit).cloned().collect())
    }
}

/// Client for a JSON search endpoint: `GET {endpoint}?q=..&limit=..`
/// answering with `[{title, url, snippet}]`.
pub struct HttpSearchClient {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpSearchClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpSearchClient {
            endpoint: endpoint.into(),
            api_key,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(20))
                .build()
                .expect("http client"),
        }
    }
}

impl SearchClient for HttpSearchClient {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<WebSnippet>, SearchFailure> {
        let mut req = self
            .http
            .get(&self.endpoint)
            .query(&[("q", query), ("limit", &limit.to_string())]);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| SearchFailure(e.to_string()))?;
        let mut snippets: Vec<WebSnippet> = resp.json().map_err(|e| SearchFailure(e.to_string()))?;
        snippets.truncate(limit);
        Ok(snippets)
    }
}

/// Names used to spot evidence about some other place or event.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    #[serde(default)]
    pub locations: Vec<String>,
    #[serde(default)]
    pub events: Vec<String>,
}

impl Gazetteer {
    pub fn gulf_coast_default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| (*x).to_owned()).collect();
        Gazetteer {
            locations: s(&[
                "houston", "texas", "galveston", "harris county", "florida", "miami", "tampa", "louisiana",
                "new orleans", "puerto rico", "california", "new york", "north carolina", "japan", "india",
            ]),
            events: s(&[
                "hurricane harvey", "hurricane katrina", "hurricane ike", "hurricane ian", "hurricane sandy",
                "hurricane maria", "hurricane irma", "hurricane ida", "hurricane michael", "hurricane beryl",
            ]),
        }
    }
}

/// Rewritten query followed by any tag it does not already mention.
pub fn formulate_search_query(sqr: &StructuredQueryRepresentation) -> String {
    let mut q = sqr.rewritten_query.trim().to_owned();
    let lower = q.to_lowercase();
    let missing: Vec<&str> = sqr
        .entity_tags
        .all()
        .filter(|t| !lower.contains(t.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        q.push(' ');
        q.push_str(&missing.join(" "));
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchResult {
    pub snippets: Vec<WebSnippet>,
    pub degraded: bool,
}

pub fn fetch_snippets<S: SearchClient + ?Sized>(query: &str, client: &S, limit: usize) -> FetchResult {
    let limit = limit.max(1);
    match client.search(query, limit) {
        Ok(mut snippets) => {
            snippets.retain(|s| !s.url.is_empty() && !s.snippet_text.trim().is_empty());
            snippets.truncate(limit);
            FetchResult {
                snippets,
                degraded: false,
            }
        }
        Err(e) => {
            warn!(error = %e, "web search failed");
            FetchResult {
                snippets: Vec::new(),
                degraded: true,
            }
        }
    }
}

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(19|20)\d{2}\b").unwrap());

fn mentions(folded: &str, name: &str) -> bool {
    let name = fold(name);
    !name.is_empty() && format!(" {folded} ").contains(&format!(" {name} "))
}

/// Keeps snippets consistent with the request's places, events and years.
///
/// A snippet is dropped on a dimension only when the request has tags there,
/// the snippet mentions none of them, and it names some other gazetteer
/// entry. Years conflict when the request names a year and the snippet
/// names only different ones. Surviving snippets keep their order.
pub fn filter_snippets(
    snippets: &[WebSnippet],
    sqr: &StructuredQueryRepresentation,
    gazetteer: &Gazetteer,
) -> Vec<WebSnippet> {
    let tags = &sqr.entity_tags;
    let query_years: Vec<&str> = YEAR.find_iter(&sqr.rewritten_query).map(|m| m.as_str()).collect();
    let conflicts = |folded: &str, wanted: &[String], known: &[String]| {
        !wanted.is_empty()
            && !wanted.iter().any(|w| mentions(folded, w))
            && known
                .iter()
                .any(|k| mentions(folded, k) && !wanted.iter().any(|w| fold(w).contains(&fold(k)) || fold(k).contains(&fold(w))))
    };
    snippets
        .iter()
        .filter(|s| {
            let raw = format!("{} {}", s.title, s.snippet_text);
            let folded = fold(&raw);
            if conflicts(&folded, &tags.locations, &gazetteer.locations) {
                return false;
            }
            if conflicts(&folded, &tags.disaster_types, &gazetteer.events) {
                return false;
            }
            if !query_years.is_empty() {
                let years: Vec<&str> = YEAR.find_iter(&raw).map(|m| m.as_str()).collect();
                if !years.is_empty() && !years.iter().any(|y| query_years.contains(y)) {
                    return false;
                }
            }
            true
        })
        .cloned()
        .collect()
}

/// Search, filter and package snippets as `(url, text)` units.
pub fn fallback_flow<S: SearchClient + ?Sized>(
    sqr: &StructuredQueryRepresentation,
    search: &S,
    gazetteer: &Gazetteer,
    limit: usize,
) -> GroundingContext {
    let query = formulate_search_query(sqr);
    let fetched = fetch_snippets(&query, search, limit);
    let kept = filter_snippets(&fetched.snippets, sqr, gazetteer);
    let units = kept
        .into_iter()
        .map(|s| ContextUnit {
            source_id: s.url,
            text: truncate_tokens(&s.snippet_text, UNIT_TOKENS),
        })
        .collect();
    let mut ctx = GroundingContext::new(Pathway::WebFallback, units);
    ctx.degraded = fetched.degraded || ctx.is_empty();
    ctx
}
