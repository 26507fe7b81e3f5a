use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `{path, sha256}` for an input file.
pub fn input_entry(path: &Path) -> Result<Value, CliError> {
    Ok(json!({
        "path": path.display().to_string(),
        "sha256": sha256_file(path)?,
    }))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
