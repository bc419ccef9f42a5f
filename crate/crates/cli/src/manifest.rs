use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const MANIFEST_NAME: &str = "manifest.json";

/// A file with its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of(path: &Path) -> CliResult<Self> {
        let content = fs::read(path)?;
        Ok(Self {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&content),
            bytes: content.len() as u64,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of one subcommand run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config: Value,
    pub seeds: Value,
    /// Input files with their paths as given.
    pub inputs: BTreeMap<String, FileEntry>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub convergence: Option<Value>,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Value) -> Self {
        let versions = BTreeMap::from([
            ("specfield".to_string(), specfield::VERSION.to_string()),
            ("cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Self {
            command: command.into(),
            versions,
            config,
            seeds,
            inputs: BTreeMap::new(),
            timings: BTreeMap::new(),
            convergence: None,
            files: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let mut entry = FileEntry::of(path)?;
        entry.name = path.display().to_string();
        self.inputs.insert(role.into(), entry);
        Ok(())
    }

    /// Hashes the named files in `dir` and writes the manifest beside them.
    pub fn finish(mut self, dir: &Path, names: &[String]) -> CliResult<Self> {
        self.files = names
            .iter()
            .map(|n| FileEntry::of(&dir.join(n)))
            .collect::<CliResult<_>>()?;
        fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }

    /// Listed files whose current content no longer matches the recorded hash.
    pub fn stale_files(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| FileEntry::of(&dir.join(&f.name)).map(|e| e.sha256 != f.sha256).unwrap_or(true))
            .map(|f| f.name.clone())
            .collect()
    }
}
