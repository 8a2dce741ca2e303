//! Training engine for knowledge graph embeddings.
//!
//! The crate is organized around the life cycle of a training run:
//!
//! * [`graph`] — triplet ingestion, vocabularies, adjacency indexes.
//! * [`models`] — score functions, analytic gradients, losses, and the
//!   grouped batch scorer that makes joint negative sampling cheap.
//! * [`sampling`] — positive mini-batch sampling and the negative
//!   corruption flavors (uniform joint, in-batch degree, local-partition).
//! * [`partition`] — entity/graph partitioning for distributed placement
//!   and per-epoch relation partitioning across workers.
//! * [`kvstore`] — embedding tables with hogwild update semantics, sparse
//!   Adagrad, a push/pull wire protocol, server, and client.
//! * [`trainer`] — the mini-batch loop across workers, overlapped entity
//!   updates, periodic barriers.
//! * [`eval`] — filtered and sampled link-prediction protocols plus
//!   Hit@k / MR / MRR.

pub mod error;
pub mod eval;
pub mod graph;
pub mod kvstore;
pub mod models;
pub mod partition;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
