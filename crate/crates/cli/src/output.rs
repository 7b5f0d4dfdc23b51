use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    provenance: &'a Provenance,
    command: &'a str,
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One command's output directory, held under a lock file until finished.
pub struct RunDir {
    pub dir: PathBuf,
    command: &'static str,
    provenance: Provenance,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    _lock: File,
}

impl RunDir {
    pub fn create(config: &RunConfig, command: &'static str, tag: Option<&str>) -> Result<Self> {
        let name = match tag {
            Some(t) if !t.is_empty() && !t.contains(['/', '\\']) && t != "." && t != ".." => t.to_string(),
            Some(t) => bail!("invalid tag `{t}`"),
            None => chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(),
        };
        let dir = config.out.join(command).join(name);
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let lock = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(dir.join(LOCK_FILE))
            .with_context(|| format!("output directory {} is locked by another run", dir.display()))?;
        Ok(RunDir {
            dir,
            command,
            provenance: Provenance {
                tool: "soundocc",
                version: VERSION,
                config_hash: config.short_hash(),
            },
            inputs: Vec::new(),
            outputs: Vec::new(),
            _lock: lock,
        })
    }

    /// Leading comment line for CSV outputs.
    pub fn comment(&self) -> String {
        format!("soundocc {} config={}", VERSION, self.provenance.config_hash)
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Register an output file name and return its path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    /// Write `body` as pretty JSON with a `provenance` field.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let envelope = Envelope {
            provenance: &self.provenance,
            body,
        };
        let mut text = serde_json::to_string_pretty(&envelope)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Write the manifest; the lock is released on drop.
    pub fn finish(self, config: &RunConfig) -> Result<PathBuf> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: digest(p)?,
                })
            })
            .collect::<Result<_>>()?;
        let mut names = self.outputs.clone();
        names.sort();
        names.dedup();
        let outputs = names
            .iter()
            .map(|n| {
                Ok(FileDigest {
                    path: n.clone(),
                    sha256: digest(&self.dir.join(n))?,
                })
            })
            .collect::<Result<_>>()?;
        let manifest = Manifest {
            provenance: &self.provenance,
            command: self.command,
            config,
            inputs,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.dir.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}
