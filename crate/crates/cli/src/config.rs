//! Layered run configuration: defaults, then the optional TOML file,
//! then explicit command-line flags.

use std::path::Path;

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub order: OrderSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub household: HouseholdSection,
    #[serde(default)]
    pub shock: ShockSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub density: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderSection {
    pub period: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub order_period: Option<String>,
    pub balance_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub interpolate: Option<f64>,
    pub damping: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdSection {
    pub beta: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockSection {
    pub shock_size: Option<f64>,
    pub eta: Option<f64>,
    pub systems: Option<Vec<String>>,
    pub emit_outcomes: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("failed to read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

/// flags > file > default
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_opt<T: Copy>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
