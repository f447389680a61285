//! Command-line pipeline: dataset bundles, training, search, the experiment
//! grid, embedding export and evaluation.

pub mod bundle;
pub mod cli;
pub mod config;
pub mod grid;
pub mod manifest;
pub mod pipeline;

pub use cli::{exit_code, run, Cli};
