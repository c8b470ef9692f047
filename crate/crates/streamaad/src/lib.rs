//! File formats, experiment orchestration and the command-line interface
//! around [`streamaad_core`].
//!
//! Datasets are directories holding a JSON manifest and one binary payload
//! per trial (see [`container`]). Checkpoints are single binary files (see
//! [`checkpoint`]). An experiment is described by one JSON config file (see
//! [`config`]) and writes its metrics log, checkpoints and reports below
//! its output directory.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use error::{Error, Result};
pub use streamaad_core as core;
