pub mod chart;
pub mod config;
pub mod error;
pub mod expr;
pub mod forms;
pub mod harness;
pub mod hermitian;
pub mod solver;
pub mod spectral;
pub mod subsolution;
pub mod symfunc;

pub use error::{Error, Result};

/// Environment variable selecting the worker count for pointwise kernels.
pub const THREADS_ENV: &str = "TRANSVERSE_THREADS";

/// Worker count from [`THREADS_ENV`], defaulting to one.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(1)
}
