//! File formats, run configuration and command implementations around
//! `scen-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod io;
pub mod metadata;
pub mod report;

pub use error::{Error, Result};
