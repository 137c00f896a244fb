//! Experiment runner: JSON configs in, CSV/JSON data files and a manifest out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
