#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Command-line tooling around `gridhedge-core`: series ingestion, TOML
//! configuration, result tables and reproducible run manifests.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod timeseries;
pub mod validate;
