//! Command-line plumbing for sharded CQR subsampling: CSV shard ingestion,
//! normalization, run configuration and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod normalize;

pub use error::{exit, CliError, CliResult};
