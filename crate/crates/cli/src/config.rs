use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::commands::Failure;

/// Optional run defaults read from `--config`.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub arch: Option<String>,
    pub setting: Option<String>,
    pub grid: Option<String>,
    pub grid_file: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub window: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub const SEED_ENV: &str = "MSKML_SEED";

pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Flag, then config file, then `MSKML_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}
