use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// `run-manifest.json`: everything needed to rerun and audit a command.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub git_describe: Option<String>,
    pub parameters: Value,
    pub results: Value,
    pub outputs: Vec<PathBuf>,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, parameters: &impl Serialize, results: Value, outputs: Vec<PathBuf>, start: Instant) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            git_describe: git_describe(),
            parameters: serde_json::to_value(parameters).expect("parameters serialise to JSON"),
            results,
            outputs,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("run-manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serialises to JSON");
        std::fs::write(&path, text).map_err(|source| CliError::Io { context: format!("cannot write {}", path.display()), source })
    }
}

fn git_describe() -> Option<String> {
    let out = Command::new("git").args(["describe", "--always", "--dirty", "--tags"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!s.is_empty()).then_some(s)
}
