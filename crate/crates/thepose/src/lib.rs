//! File formats, experiment configuration, reports and the command-line
//! driver around [`thepose_core`].

mod binio;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, FormatError, Result};
