use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    Ok(hash_bytes(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Hashes of every stage's inputs and outputs, keyed by stage id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> io::Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(io::Error::other),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

/// The files and settings a stage consumes, reduced to one hash.
pub struct StageInputs {
    pub stage: String,
    pub config: serde_json::Value,
    pub files: Vec<PathBuf>,
}

impl StageInputs {
    /// Input file paths are keyed relative to `root` so the hash survives
    /// moving the work directory.
    pub fn digest(&self, root: &Path) -> io::Result<(String, BTreeMap<String, String>)> {
        let mut hasher = Sha256::new();
        hasher.update(self.stage.as_bytes());
        hasher.update([0]);
        hasher.update(self.config.to_string().as_bytes());
        let mut files = BTreeMap::new();
        for f in &self.files {
            let key = relative_key(root, f);
            let h = hash_file(f).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", f.display())))?;
            hasher.update([0]);
            hasher.update(key.as_bytes());
            hasher.update([0]);
            hasher.update(h.as_bytes());
            files.insert(key, h);
        }
        Ok((hex::encode(hasher.finalize()), files))
    }
}

pub fn relative_key(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}
