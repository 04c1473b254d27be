//! Batch front end for the estimation library: CSV ingestion, configuration
//! resolution, the fitting / scaling / sampling subcommands, and
//! machine-readable output files. Everything is deterministic given the
//! resolved configuration and seed.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod stats;
