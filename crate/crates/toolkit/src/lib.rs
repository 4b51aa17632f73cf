//! File formats, dataset pipeline and command-line front end for the
//! `prefix-global-core` attention toolkit.

pub mod attend;
pub mod config;
pub mod corpus;
mod error;
pub mod formats;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};

/// Version string embedded in every report.
pub const TOOLKIT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
