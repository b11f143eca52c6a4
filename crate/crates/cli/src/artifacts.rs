//! Deterministic artifact writing: fixed-precision CSV cells, JSON
//! documents, and the per-run manifest with content hashes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// 15 significant digits, stable across platforms.
pub fn sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        x.to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot hash {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct ManifestDoc {
    tool: &'static str,
    version: &'static str,
    command: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_stage: Option<String>,
    config: serde_json::Value,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
}

/// Collects every file a run touches and serializes the reproducibility
/// manifest next to the outputs.
pub struct Manifest {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_inputs<I: IntoIterator<Item = PathBuf>>(&mut self, paths: I) {
        self.inputs.extend(paths);
    }

    pub fn record_output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn write(self, dir: &Path, failed_stage: Option<&str>) -> Result<(), CliError> {
        let entry = |path: &PathBuf| -> Result<ManifestEntry, CliError> {
            Ok(ManifestEntry {
                path: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string()),
                sha256: sha256_file(path)?,
            })
        };
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.push(ManifestEntry {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            });
        }
        let mut outputs = Vec::new();
        for p in &self.outputs {
            outputs.push(entry(p)?);
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let doc = ManifestDoc {
            tool: "cces",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            status: if failed_stage.is_none() {
                "complete"
            } else {
                "incomplete"
            },
            failed_stage: failed_stage.map(str::to_string),
            config: self.config,
            inputs,
            outputs,
        };
        write_json(&dir.join("manifest.json"), &doc)
    }
}

/// Build a CSV from a header and row-emitting closure.
pub fn csv_table<F>(header: &str, rows: F) -> String
where
    F: FnOnce(&mut String),
{
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    rows(&mut out);
    out
}
