//! Experiment harness: TOML configs, presets, sweeps with bound pairing and
//! deterministic CSV/JSON reports.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod sweep;

pub use error::{HarnessError, Result};

/// Version tag written into every output document.
pub const SCHEMA_VERSION: u32 = 1;
