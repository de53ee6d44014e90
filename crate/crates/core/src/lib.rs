//! Multi-path retrieval-augmented question answering for disaster
//! information.
//!
//! A request is rewritten against session memory, classified and tagged,
//! then routed to one of three evidence pathways: hybrid document
//! retrieval with reranking, guarded text-to-SQL over a relational store,
//! or filtered web search. Each pathway yields a [`GroundingContext`] that
//! a branch-specific prompt turns into an answer with provenance.

pub mod config;
pub mod context;
pub mod engine;
pub mod eval;
pub mod generation;
pub mod knowledge;
pub mod llm;
pub mod memory;
pub mod offline;
pub mod retrieval;
pub mod router;
pub mod sql;
pub mod text;
pub mod understanding;
pub mod web;

pub use context::{ContextUnit, Difficulty, GroundingContext, TaskKind};
pub use engine::{Engine, QueryResponse, SessionRegistry, TurnError};
pub use knowledge::{Corpus, Passage, StructuredStore, Value};
pub use llm::{ClientError, GenerationRequest, GenerativeModelClient};
pub use memory::{MemoryEntry, QaPair, SessionMemory};
pub use router::{route, Pathway, RouteDecision};
pub use understanding::{EntityTags, QueryType, StructuredQueryRepresentation};
