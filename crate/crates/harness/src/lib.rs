//! Experiment harness: configuration, Monte Carlo drivers, file formats and
//! the `accs` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod output;

pub use error::{HarnessError, Result};
