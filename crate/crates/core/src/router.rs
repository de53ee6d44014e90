use std::fmt;

use serde::{Deserialize, Serialize};

use crate::understanding::{QueryType, StructuredQueryRepresentation};

/// Evidence-access pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    #[serde(rename = "document")]
    DocumentRetrieval,
    #[serde(rename = "structured")]
    StructuredAccess,
    #[serde(rename = "web")]
    WebFallback,
}

impl Pathway {
    /// Wire label: `document`, `structured` or `web`.
    pub fn label(self) -> &'static str {
        match self {
            Pathway::DocumentRetrieval => "document",
            Pathway::StructuredAccess => "structured",
            Pathway::WebFallback => "web",
        }
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub pathway: Pathway,
    pub reason: String,
}

/// Picks exactly one pathway. Out-of-domain requests go to the web before
/// the query type is considered; the ambiguity flag is ignored.
pub fn route(sqr: &StructuredQueryRepresentation) -> RouteDecision {
    let (pathway, reason) = if !sqr.is_domain_relevant {
        (Pathway::WebFallback, "out-of-domain")
    } else {
        match sqr.query_type {
            QueryType::Quantitative => (Pathway::StructuredAccess, "quantitative"),
            QueryType::Descriptive | QueryType::Explanatory => {
                (Pathway::DocumentRetrieval, "descriptive-or-explanatory")
            }
            QueryType::Locational | QueryType::Contextual | QueryType::Other => {
                (Pathway::DocumentRetrieval, "default-document")
            }
        }
    };
    RouteDecision {
        pathway,
        reason: reason.to_owned(),
    }
}
