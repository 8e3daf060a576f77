//! Command-line front end for ensemble-disagreement novelty detection:
//! JSON configs, CSV/JSON artifact formats, presets and the experiment
//! pipeline behind the `erd` binary.

pub mod commands;
pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod presets;

pub use error::{CliError, Result};
