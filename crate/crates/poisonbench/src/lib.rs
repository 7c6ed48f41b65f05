//! A desk-scale laboratory for studying poisoning attacks on text-attributed
//! graphs: structural and textual poisoning, small GNN victims, a robustness
//! metric suite, embedding-based graph purification, and randomized-smoothing
//! certification under edge deletion.

pub mod attacks;
pub mod bench;
mod cli;
pub mod defend;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod tagraph;
pub mod victims;

pub use error::{Error, Result};

/// CLI entry point; returns the process exit code.
pub fn run_cli() -> i32 {
    cli::run()
}
