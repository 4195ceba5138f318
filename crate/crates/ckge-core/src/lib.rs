//! Continual knowledge-graph-embedding toolkit.
//!
//! Trains embeddings over growing KG snapshot sequences with pluggable
//! forgetting-mitigation strategies, and evaluates link prediction under two
//! candidate protocols: the legacy one that ranks each test set only against
//! the entities of its own snapshot, and the corrected one that ranks against
//! the full entity set of the latest trained snapshot. The gap between the
//! two isolates the interference caused by newly introduced entities, which
//! the toolkit separates from drift in previously learned rows.

// Numeric kernels here iterate parallel arrays by explicit index.
#![allow(clippy::needless_range_loop)]

pub mod continual;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod kg;
pub mod models;
pub mod runner;
pub mod snapgen;

pub use error::{Error, Result};
