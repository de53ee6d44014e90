//! Two-layer knowledge base: a passage corpus for retrieval and a relational
//! store for exact-value questions.

mod corpus;
mod store;

pub use corpus::{ingest_passages, read_corpus_jsonl, Corpus, CorpusError, Passage, RawPassage};
pub use store::{
    load_structured_store, ColumnDecl, ColumnType, SchemaDecl, StoreError, StructuredStore,
    Table, TableDecl, Value,
};
