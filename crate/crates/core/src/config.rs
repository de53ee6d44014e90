//! TOML service configuration and engine assembly.
//!
//! Relative paths resolve against the configuration file's directory.
//! Secrets are never stored in the file: each client names the
//! environment variable that holds its key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::Engine;
use crate::generation::{TemplateError, Templates};
use crate::knowledge::{read_corpus_jsonl, CorpusError, StoreError, StructuredStore};
use crate::llm::{GenerativeModelClient, HttpChatClient, ReplayClient};
use crate::memory::DEFAULT_WINDOW;
use crate::offline::RuleBasedModel;
use crate::retrieval::{
    EmbeddingClient, HashEmbedder, HttpEmbedder, HttpRerankScorer, Indices, OverlapScorer, RerankScorer,
    RetrievalConfig, RetrievalError,
};
use crate::web::{FixtureSearchClient, Gazetteer, HttpSearchClient, SearchClient, DEFAULT_SNIPPET_LIMIT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{what} `{path}`: {source}")]
    Read {
        what: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} needs an endpoint")]
    MissingEndpoint(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Offline,
    Http,
    Replay,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub kind: ModelKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    /// Replay fixtures (JSONL); unmatched prompts go to the offline model.
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    #[serde(default)]
    pub kind: EmbedderKind,
    pub dimension: Option<usize>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RerankerKind {
    #[default]
    Overlap,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RerankerConfig {
    #[serde(default)]
    pub kind: RerankerKind,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    /// Fixture snippets, or no results when no fixture file is given.
    #[default]
    Fixture,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub kind: SearchKind,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub fixtures: Option<PathBuf>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Passage corpus, JSONL.
    pub corpus: PathBuf,
    /// Index snapshot written by `index` and read at startup.
    pub indices: PathBuf,
    /// Schema declaration JSON with per-table CSV files beside it.
    pub store: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Session JSONL directory; sessions stay in memory only when unset.
    pub sessions: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub memory_window: usize,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub reranker: RerankerConfig,
    #[serde(default)]
    pub search: SearchConfig,
    pub gazetteer: Option<Gazetteer>,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn key_from(env: &Option<String>) -> Option<String> {
    env.as_ref().and_then(|v| std::env::var(v).ok())
}

impl Config {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c: Config = toml::from_str(text)?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.corpus);
        fix(&mut c.indices);
        for p in [
            &mut c.store,
            &mut c.templates,
            &mut c.sessions,
            &mut c.model.fixtures,
            &mut c.search.fixtures,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            what: "config",
            path: path.to_owned(),
            source,
        })?;
        Config::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn model_client(&self) -> Result<Arc<dyn GenerativeModelClient>, ConfigError> {
        let m = &self.model;
        Ok(match m.kind {
            ModelKind::Offline => Arc::new(RuleBasedModel),
            ModelKind::Http => Arc::new(HttpChatClient::new(
                m.endpoint.clone().ok_or(ConfigError::MissingEndpoint("model"))?,
                m.model.clone().unwrap_or_else(|| "gpt-4o".into()),
                key_from(&m.api_key_env),
            )),
            ModelKind::Replay => {
                let path = m.fixtures.clone().unwrap_or_default();
                let replay = ReplayClient::load_jsonl(&path).map_err(|source| ConfigError::Read {
                    what: "model fixtures",
                    path,
                    source,
                })?;
                Arc::new(replay.with_fallback(Arc::new(RuleBasedModel)))
            }
        })
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingClient>, ConfigError> {
        let e = &self.embedder;
        Ok(match e.kind {
            EmbedderKind::Hash => Arc::new(e.dimension.map_or_else(HashEmbedder::default, HashEmbedder::new)),
            EmbedderKind::Http => Arc::new(HttpEmbedder::new(
                e.endpoint.clone().ok_or(ConfigError::MissingEndpoint("embedder"))?,
                e.model.clone().unwrap_or_else(|| "text-embedding-3-small".into()),
                key_from(&e.api_key_env),
                e.dimension.unwrap_or(1536),
            )),
        })
    }

    pub fn scorer(&self) -> Result<Arc<dyn RerankScorer>, ConfigError> {
        Ok(match self.reranker.kind {
            RerankerKind::Overlap => Arc::new(OverlapScorer),
            RerankerKind::Http => Arc::new(HttpRerankScorer::new(
                self.reranker.endpoint.clone().ok_or(ConfigError::MissingEndpoint("reranker"))?,
            )),
        })
    }

    pub fn search_client(&self) -> Result<Arc<dyn SearchClient>, ConfigError> {
        let s = &self.search;
        Ok(match s.kind {
            SearchKind::Fixture => match &s.fixtures {
                Some(p) => Arc::new(FixtureSearchClient::from_json_file(p).map_err(|source| ConfigError::Read {
                    what: "search fixtures",
                    path: p.clone(),
                    source,
                })?),
                None => Arc::new(FixtureSearchClient::default()),
            },
            SearchKind::Http => Arc::new(HttpSearchClient::new(
                s.endpoint.clone().ok_or(ConfigError::MissingEndpoint("search"))?,
                key_from(&s.api_key_env),
            )),
        })
    }

    /// Loads knowledge and clients. A missing index snapshot is not an
    /// error: the engine starts without indices and refuses turns.
    pub fn build_engine(&self) -> Result<Engine, ConfigError> {
        self.retrieval.validate()?;
        let corpus = read_corpus_jsonl(&self.corpus)?;
        let mut engine = Engine::new(corpus, self.model_client()?);
        engine.embedder = self.embedder()?;
        engine.scorer = self.scorer()?;
        engine.search = self.search_client()?;
        engine.retrieval = self.retrieval;
        engine.memory_window = self.memory_window;
        engine.snippet_limit = self.search.limit.unwrap_or(DEFAULT_SNIPPET_LIMIT);
        if let Some(g) = &self.gazetteer {
            engine.gazetteer = g.clone();
        }
        if let Some(dir) = &self.templates {
            engine.templates = Templates::load_dir(dir)?;
        }
        if let Some(store) = &self.store {
            engine = engine.with_store(StructuredStore::from_schema_file(store)?);
        }
        if self.indices.exists() {
            engine = engine.with_indices(Indices::load(&self.indices)?);
        } else {
            tracing::warn!(path = %self.indices.display(), "no index snapshot; run `index` first");
        }
        Ok(engine)
    }
}
