//! Orchestration on top of `metaqst`: conditioning sweeps over random
//! structures, best-structure selection, reconstruction campaigns and the
//! `metaqst` command-line tool.

pub mod campaign;
pub mod cli;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod provenance;
pub mod select;
pub mod stats;
pub mod sweep;

mod serde_ext;

pub use error::{HarnessError, Result};
