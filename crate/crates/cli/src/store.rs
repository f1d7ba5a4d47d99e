//! Atomic artifact writes and per-stage manifests with content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a sibling temp file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<FileRecord>,
    pub config: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
}

/// One stage invocation: declared inputs and settings, then the outputs it
/// produced. Reruns with identical inputs and settings are skipped.
pub struct Stage {
    out_dir: PathBuf,
    name: String,
    inputs: Vec<FileRecord>,
    config: BTreeMap<String, String>,
    outputs: Vec<(String, Vec<u8>)>,
}

impl Stage {
    pub fn new(out_dir: &Path, name: &str) -> Self {
        Stage {
            out_dir: out_dir.to_path_buf(),
            name: name.to_string(),
            inputs: Vec::new(),
            config: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(format!("manifest.{}.json", self.name))
    }

    /// Read and hash an input file.
    pub fn input(&mut self, path: &Path) -> io::Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.input_bytes(&path.display().to_string(), &bytes);
        Ok(bytes)
    }

    pub fn input_bytes(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.push(FileRecord {
            path: label.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn output(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((name.to_string(), bytes.into()));
    }

    fn manifest(&self, outputs: Vec<FileRecord>) -> Manifest {
        Manifest {
            command: self.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs.clone(),
            config: self.config.clone(),
            outputs,
        }
    }

    /// True when a previous manifest matches these inputs and settings and
    /// every output it lists is still on disk unmodified.
    pub fn is_fresh(&self) -> bool {
        let Ok(text) = fs::read(self.manifest_path()) else {
            return false;
        };
        let Ok(old) = serde_json::from_slice::<Manifest>(&text) else {
            return false;
        };
        if old != self.manifest(old.outputs.clone()) {
            return false;
        }
        old.outputs.iter().all(|o| {
            fs::read(self.out_dir.join(&o.path))
                .map(|b| sha256_hex(&b) == o.sha256)
                .unwrap_or(false)
        })
    }

    /// Write every output, then the manifest. Returns the written paths.
    pub fn commit(self) -> io::Result<Vec<PathBuf>> {
        let mut records = Vec::with_capacity(self.outputs.len());
        let mut written = Vec::with_capacity(self.outputs.len());
        for (name, bytes) in &self.outputs {
            let path = self.out_dir.join(name);
            write_atomic(&path, bytes)?;
            records.push(FileRecord {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
            written.push(path);
        }
        let manifest = self.manifest(records);
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        text.push(b'\n');
        write_atomic(&self.manifest_path(), &text)?;
        Ok(written)
    }
}
