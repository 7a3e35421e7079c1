use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Content hashes of a stage's inputs and outputs, keyed by path relative to
/// the stage directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(stage: &str, config_json: &str) -> Self {
        Self {
            stage: stage.to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            ..Self::default()
        }
    }

    pub fn add_input(&mut self, root: &Path, path: &Path) -> Result<(), IoError> {
        self.inputs.insert(relative(root, path), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, root: &Path, path: &Path) -> Result<(), IoError> {
        self.outputs
            .insert(relative(root, path), sha256_file(path)?);
        Ok(())
    }
}

/// Paths outside `root` are keyed by file name so records do not depend on
/// where the run happened.
fn relative(root: &Path, path: &Path) -> String {
    let rel = match path.strip_prefix(root) {
        Ok(r) => r,
        Err(_) => path.file_name().map(Path::new).unwrap_or(path),
    };
    rel.to_string_lossy().replace('\\', "/")
}
