//! Adaptive routing engine for knowledge edits.
//!
//! The crate stores small factual edits in an embedding-backed memory,
//! retrieves candidates for incoming queries, filters them with a trained
//! relevance model, and routes each query either to a frozen base backend
//! (when no stored edit applies) or to an aligned backend that receives the
//! matched edit inline with the query.

pub mod augment;
pub mod backend;
pub mod edit;
pub mod embed;
pub mod engine;
pub mod error;
pub mod eval;
pub mod filter;
pub mod memory;
pub mod retrieval;
pub mod router;

pub use error::Error;
