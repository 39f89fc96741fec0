//! File formats, configuration and the command line for `trajact-core`.
//!
//! - [`ingest`]: CSV parsing with schema mapping, CSV writing, conversion to tracklets.
//! - [`archive`]: newline-delimited JSON tracklet archives.
//! - [`checkpoint`]: binary model checkpoints.
//! - [`report`]: statistics and metrics reports.
//! - [`config`]: TOML run configuration.
//! - [`cli`]: the `trajact` binary.

pub mod archive;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod ingest;
pub mod report;
