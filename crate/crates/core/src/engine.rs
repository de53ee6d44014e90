//! End-to-end turn handling and the in-memory session registry.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::context::{GroundingContext, TaskKind};
use crate::generation::{now_millis, respond, Templates};
use crate::knowledge::{Corpus, StructuredStore};
use crate::llm::GenerativeModelClient;
use crate::memory::{MemoryEntry, MemoryError, SessionMemory, DEFAULT_WINDOW, REWRITE_TURNS};
use crate::retrieval::{
    retrieve, EmbeddingClient, HashEmbedder, Indices, OverlapScorer, RerankScorer, RetrievalConfig,
};
use crate::router::{route, Pathway};
use crate::sql::{structured_answer_flow, RedirectReason, StructuredOutcome};
use crate::understanding::{understand, QueryType};
use crate::web::{fallback_flow, FixtureSearchClient, Gazetteer, SearchClient, DEFAULT_SNIPPET_LIMIT};

/// Wire response for one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer_text: String,
    /// The router's decision: `document`, `structured` or `web`.
    pub pathway: Pathway,
    /// Branch whose evidence grounded the answer. Differs from `pathway`
    /// only when structured access redirected to the web.
    pub evidence_pathway: Pathway,
    pub sources: Vec<String>,
    pub degraded: bool,
    pub rewritten_query: String,
    pub query_type: QueryType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redirect_reason: Option<RedirectReason>,
    pub trace_id: String,
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("retrieval indices are not loaded")]
    IndicesNotLoaded,
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("turn {trace_id} failed: {message}")]
    Failed { trace_id: String, message: String },
}

impl TurnError {
    fn failed(trace_id: &str, message: impl ToString) -> Self {
        TurnError::Failed {
            trace_id: trace_id.to_owned(),
            message: message.to_string(),
        }
    }
}

/// Loaded knowledge, clients and settings shared by every session.
pub struct Engine {
    pub corpus: Arc<Corpus>,
    pub indices: Option<Arc<Indices>>,
    pub store: Option<Arc<StructuredStore>>,
    pub model: Arc<dyn GenerativeModelClient>,
    pub embedder: Arc<dyn EmbeddingClient>,
    pub scorer: Arc<dyn RerankScorer>,
    pub search: Arc<dyn SearchClient>,
    pub gazetteer: Gazetteer,
    pub templates: Templates,
    pub retrieval: RetrievalConfig,
    pub snippet_limit: usize,
    pub memory_window: usize,
}

impl Engine {
    /// An engine over `corpus` with offline defaults for everything else.
    pub fn new(corpus: Corpus, model: Arc<dyn GenerativeModelClient>) -> Self {
        Engine {
            corpus: Arc::new(corpus),
            indices: None,
            store: None,
            model,
            embedder: Arc::new(HashEmbedder::default()),
            scorer: Arc::new(OverlapScorer),
            search: Arc::new(FixtureSearchClient::default()),
            gazetteer: Gazetteer::gulf_coast_default(),
            templates: Templates::default(),
            retrieval: RetrievalConfig::default(),
            snippet_limit: DEFAULT_SNIPPET_LIMIT,
            memory_window: DEFAULT_WINDOW,
        }
    }

    pub fn with_indices(mut self, indices: Indices) -> Self {
        self.indices = Some(Arc::new(indices));
        self
    }

    pub fn with_store(mut self, store: StructuredStore) -> Self {
        self.store = Some(Arc::new(store));
        self
    }

    pub fn with_search(mut self, search: Arc<dyn SearchClient>) -> Self {
        self.search = search;
        self
    }

    pub fn indices_loaded(&self) -> bool {
        self.indices.is_some()
    }

    fn web(&self, sqr: &crate::understanding::StructuredQueryRepresentation) -> GroundingContext {
        fallback_flow(sqr, self.search.as_ref(), &self.gazetteer, self.snippet_limit)
    }

    /// Runs understand, route, the branch flow and respond, then records
    /// the turn. A failed turn leaves `memory` untouched.
    pub fn handle_query(&self, memory: &mut SessionMemory, text: &str) -> Result<QueryResponse, TurnError> {
        let Some(indices) = &self.indices else {
            return Err(TurnError::IndicesNotLoaded);
        };
        let trace_id = uuid::Uuid::new_v4().to_string();
        let model = self.model.as_ref();
        let sqr = understand(text, memory, model);
        let decision = route(&sqr);
        info!(%trace_id, pathway = %decision.pathway, reason = %decision.reason, "routed");

        let mut redirect_reason = None;
        let mut sql = None;
        let ctx = match decision.pathway {
            Pathway::DocumentRetrieval => retrieve(
                &sqr.rewritten_query,
                &self.retrieval,
                indices,
                &self.corpus,
                self.embedder.as_ref(),
                self.scorer.as_ref(),
                TaskKind::Interactive,
            )
            .map_err(|e| TurnError::failed(&trace_id, e))?
            .context,
            Pathway::StructuredAccess => match &self.store {
                Some(store) => match structured_answer_flow(&sqr, store, model) {
                    StructuredOutcome::Grounded(ctx) => {
                        sql = ctx.sql.clone();
                        ctx
                    }
                    StructuredOutcome::Redirect(r) => {
                        if matches!(r.reason, RedirectReason::ExecutionFailed(_)) {
                            sql = r.sql.clone();
                        }
                        redirect_reason = Some(r.reason);
                        self.web(&r.sqr)
                    }
                },
                None => {
                    warn!(%trace_id, "no structured store configured; using web fallback");
                    redirect_reason = Some(RedirectReason::TranslationFailed("no structured store loaded".into()));
                    self.web(&sqr)
                }
            },
            Pathway::WebFallback => self.web(&sqr),
        };

        let pairs = memory.retrieve(&sqr.entity_tags, REWRITE_TURNS);
        let envelope = respond(&self.templates, &ctx, &pairs, &sqr.rewritten_query, model, TaskKind::Interactive)
            .map_err(|e| TurnError::failed(&trace_id, e))?;

        memory
            .store(MemoryEntry {
                user_query: text.to_owned(),
                answer: envelope.answer_text.clone(),
                entity_tags: sqr.entity_tags.clone(),
                timestamp: memory.next_timestamp(envelope.timestamp),
            })
            .map_err(|e| TurnError::failed(&trace_id, e))?;

        Ok(QueryResponse {
            answer_text: envelope.answer_text,
            pathway: decision.pathway,
            evidence_pathway: envelope.pathway,
            sources: envelope.sources,
            degraded: envelope.degraded || sqr.degraded,
            rewritten_query: sqr.rewritten_query,
            query_type: sqr.query_type,
            sql,
            redirect_reason,
            trace_id,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

pub struct SessionHandle {
    pub info: SessionInfo,
    pub memory: SessionMemory,
}

/// Sessions keyed by id. Turns within one session run one at a time;
/// different sessions proceed independently.
pub struct SessionRegistry {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionHandle>>>>,
    persist_dir: Option<PathBuf>,
}

impl SessionRegistry {
    pub fn new(engine: Arc<Engine>) -> Self {
        SessionRegistry {
            engine,
            sessions: RwLock::new(HashMap::new()),
            persist_dir: None,
        }
    }

    /// Writes each session's window to `<dir>/<session_id>.jsonl` after every turn.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> Self {
        self.persist_dir = Some(dir.into());
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn create(&self) -> Result<SessionInfo, MemoryError> {
        let info = SessionInfo {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: now_millis(),
        };
        let memory = SessionMemory::new(self.engine.memory_window)?;
        self.sessions.write().unwrap().insert(
            info.session_id.clone(),
            Arc::new(Mutex::new(SessionHandle {
                info: info.clone(),
                memory,
            })),
        );
        Ok(info)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<SessionHandle>>, TurnError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| TurnError::UnknownSession(id.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn query(&self, id: &str, text: &str) -> Result<QueryResponse, TurnError> {
        let session = self.get(id)?;
        let mut handle = session.lock().unwrap_or_else(|p| p.into_inner());
        // work on a copy so a failed turn cannot leave partial state
        let mut memory = handle.memory.clone();
        let response = self.engine.handle_query(&mut memory, text)?;
        handle.memory = memory;
        if let Some(dir) = &self.persist_dir {
            let path = dir.join(format!("{id}.jsonl"));
            let written = std::fs::File::create(&path)
                .map_err(MemoryError::from)
                .and_then(|f| handle.memory.write_jsonl(std::io::BufWriter::new(f)));
            if let Err(e) = written {
                warn!(error = %e, path = %path.display(), "could not persist session");
            }
        }
        Ok(response)
    }

    pub fn history(&self, id: &str) -> Result<Vec<MemoryEntry>, TurnError> {
        let session = self.get(id)?;
        let handle = session.lock().unwrap_or_else(|p| p.into_inner());
        Ok(handle.memory.entries().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{ingest_passages, RawPassage};
    use crate::llm::FailingClient;
    use crate::offline::RuleBasedModel;
    use crate::retrieval::build_indices;

    fn corpus() -> Corpus {
        let p = |id: &str, src: &str, text: &str| RawPassage {
            id: id.into(),
            text: text.into(),
            source_id: src.into(),
            hazard_tags: vec![],
            location_tags: vec![],
        };
        ingest_passages(vec![
            p("p1", "nws-watch", "A hurricane watch means hurricane conditions are possible within 48 hours."),
            p("p2", "nws-warning", "A hurricane warning means hurricane conditions are expected within 36 hours."),
            p("p3", "fema-kit", "An emergency kit should hold water, food and medicine for three days."),
        ])
        .unwrap()
    }

    fn engine(model: Arc<dyn GenerativeModelClient>) -> Engine {
        let c = corpus();
        let idx = build_indices(&c, &HashEmbedder::default()).unwrap();
        Engine::new(c, model).with_indices(idx)
    }

    #[test]
    fn unindexed_engine_refuses_turns() {
        let e = Engine::new(corpus(), Arc::new(RuleBasedModel));
        let mut m = SessionMemory::default();
        assert!(matches!(e.handle_query(&mut m, "What is a hurricane watch?"), Err(TurnError::IndicesNotLoaded)));
    }

    #[test]
    fn document_turn_records_memory() {
        let e = engine(Arc::new(RuleBasedModel));
        let mut m = SessionMemory::default();
        let r = e.handle_query(&mut m, "What is a hurricane watch?").unwrap();
        assert_eq!(r.pathway, Pathway::DocumentRetrieval);
        assert_eq!(r.sources[0], "nws-watch");
        assert!(r.answer_text.contains("48 hours"));
        assert_eq!(m.len(), 1);
        e.handle_query(&mut m, "And what about a warning?").unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn failed_turn_leaves_memory_unchanged() {
        // understanding degrades gracefully; the answer call is what fails
        let e = engine(Arc::new(FailingClient));
        let mut m = SessionMemory::default();
        assert!(matches!(e.handle_query(&mut m, "What is a hurricane watch?"), Err(TurnError::Failed { .. })));
        assert!(m.is_empty());
    }

    #[test]
    fn structured_without_store_redirects_to_web() {
        let e = engine(Arc::new(RuleBasedModel));
        let mut m = SessionMemory::default();
        let r = e.handle_query(&mut m, "How many shelters opened during Hurricane Harvey?").unwrap();
        assert_eq!(r.pathway, Pathway::StructuredAccess);
        assert_eq!(r.evidence_pathway, Pathway::WebFallback);
        assert!(r.sql.is_none() && r.redirect_reason.is_some());
        assert!(r.degraded);
    }

    #[test]
    fn sessions_are_isolated() {
        let reg = SessionRegistry::new(Arc::new(engine(Arc::new(RuleBasedModel))));
        let a = reg.create().unwrap().session_id;
        let b = reg.create().unwrap().session_id;
        assert_ne!(a, b);
        reg.query(&a, "What is a hurricane watch?").unwrap();
        reg.query(&b, "What should an emergency kit hold?").unwrap();
        reg.query(&a, "What is a hurricane warning?").unwrap();
        let ha = reg.history(&a).unwrap();
        let hb = reg.history(&b).unwrap();
        assert_eq!(ha.len(), 2);
        assert_eq!(hb.len(), 1);
        assert!(hb[0].user_query.contains("kit"));
        assert!(matches!(reg.history("nope"), Err(TurnError::UnknownSession(_))));
    }

    #[test]
    fn persistence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let reg = SessionRegistry::new(Arc::new(engine(Arc::new(RuleBasedModel)))).with_persistence(dir.path());
        let id = reg.create().unwrap().session_id;
        reg.query(&id, "What is a hurricane watch?").unwrap();
        let f = std::fs::File::open(dir.path().join(format!("{id}.jsonl"))).unwrap();
        let restored = SessionMemory::read_jsonl(std::io::BufReader::new(f), DEFAULT_WINDOW).unwrap();
        assert_eq!(restored.entries().cloned().collect::<Vec<_>>(), reg.history(&id).unwrap());
    }
}
