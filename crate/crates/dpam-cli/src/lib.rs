//! Command-line front end for the `dpam` library: dataset generation and
//! ingestion, single fits, (ρ, λ) grid experiments with trace/summary/table
//! artifacts, and prediction from saved models.
//!
//! Everything the binary does is callable as a library function, which is
//! how the integration and acceptance tests drive it.

pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;

pub use cli::{run, Cli};
