//! File formats, embedding providers and the command-line pipeline around
//! `agentmix-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod embedding;
mod error;
pub mod trace;

pub use error::{Error, Result};
