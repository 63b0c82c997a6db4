//! File formats, experiment orchestration and the command-line front end
//! for `cagecoopt-core`.
//!
//! Output paths given as relative paths are resolved against the output
//! root, read from `CAGECOOPT_OUTPUT_ROOT` (default: the working directory).

pub mod config;
pub mod experiment;
pub mod formats;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{
    compute_q, run_codesign, sweep_disturbance, ExperimentError, ExperimentReport, QStats, SeedReport, SweepRow,
};
pub use report::emit_report;

/// Environment variable naming the output root.
pub const OUTPUT_ROOT_ENV: &str = "CAGECOOPT_OUTPUT_ROOT";

/// `path` itself when absolute, otherwise `root/path`.
pub fn resolve_output(root: Option<&Path>, path: &Path) -> PathBuf {
    match root {
        Some(r) if path.is_relative() => r.join(path),
        _ => path.to_path_buf(),
    }
}
