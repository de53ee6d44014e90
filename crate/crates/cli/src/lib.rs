//! Operational surface for the engine: indexing, one-shot queries, grid
//! sweeps and the session HTTP service.

pub mod commands;
pub mod http;

pub use commands::{eval_synthetic, eval_tasks, grid_spec, index, query_once, render_trace};
pub use http::router;
