//! Shared run configuration and worker-count selection.

use serde::Serialize;

use prefix_global_core::pattern::{DEFAULT_BLOCK, DEFAULT_PREFIX, DEFAULT_RADIUS};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "PREFIX_GLOBAL_THREADS";

/// Parameters echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Config {
    pub k: usize,
    pub r: usize,
    pub block: usize,
    pub scale_by_sqrt_d: bool,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self { k: DEFAULT_PREFIX, r: DEFAULT_RADIUS, block: DEFAULT_BLOCK, scale_by_sqrt_d: true, seed: 0 }
    }
}

/// Worker threads: `PREFIX_GLOBAL_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
