//! File formats: dataset CSVs, JSON run configurations and fit artifacts,
//! effect and replication tables. Every writer goes through a temporary
//! file in the target directory and a rename.

mod artifacts;
mod config;
mod dataset;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use artifacts::{
    effects_to_csv, read_fit, report_to_csv, write_effects, write_fit, write_report, write_truth, FitArtifact,
    EFFECTS_HEADER, REPORT_HEADER,
};
pub use config::{BootstrapBlock, EstimatorBlock, ReplicateBlock, RunConfig, ScenarioBlock};
pub use dataset::{read_dataset, write_dataset, BASELINE_FILE, LONG_FILE};

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}
