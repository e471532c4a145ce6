//! File formats, experiment commands, and the `austeer` binary: the IO
//! companion to `austeer-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod jobs;
pub mod manifest;

pub mod formats {
    pub mod container;
    pub mod pairs;
    pub mod plan;
    pub mod report;
    pub mod scores;
    pub mod series;
    pub mod tokenizer;
    pub mod wire;
}

pub use error::CliError;
