//! Experiment driver for `specfield`: synthetic bundles, MAP fits, Wiener
//! reconstructions and CSV exports, each with a hashed `manifest.json`.

pub mod commands;
pub mod error;
pub mod manifest;

pub use error::{CliError, CliResult};
pub use manifest::{FileEntry, RunManifest};

/// Thread cap from `SPECFIELD_THREADS`, or all available cores.
pub fn thread_cap(env: Option<&str>) -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match env {
        None => Ok(available),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n.min(available)),
            _ => Err(CliError::Usage(format!("SPECFIELD_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}
