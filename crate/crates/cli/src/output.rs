//! Output directories: an exclusive lockfile while a command writes, and a
//! manifest listing every artifact with its SHA-256.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const LOCK_FILE: &str = ".lock";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub core_version: &'a str,
    pub config_sha256: Option<String>,
    pub status: String,
    pub wall_time_s: f64,
    pub artifacts: &'a [Artifact],
    pub details: serde_json::Value,
}

/// An output directory held under an exclusive lock.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => writeln!(f, "{}", std::process::id())?,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Config(format!(
                    "{} is locked by another run (remove {} if it is stale)",
                    root.display(),
                    lock.display()
                )))
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Writes an artifact through `f` and records its hash.
    pub fn write(
        &mut self,
        rel: impl AsRef<Path>,
        f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        {
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
        }
        let bytes = fs::read(&path)?;
        self.artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write_str(&mut self, rel: impl AsRef<Path>, s: &str) -> Result<(), CliError> {
        self.write(rel, |w| Ok(w.write_all(s.as_bytes())?))
    }

    pub fn write_json(&mut self, rel: impl AsRef<Path>, v: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Failed(e.to_string()))?;
        s.push('\n');
        self.write_str(rel, &s)
    }

    #[cfg(test)]
    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    /// Writes the manifest and releases the lock.
    pub fn finish(
        self,
        command: &str,
        config_sha256: Option<String>,
        status: &str,
        details: serde_json::Value,
    ) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            core_version: wentzell_core::VERSION,
            config_sha256,
            status: status.to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            artifacts: &self.artifacts,
            details,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Failed(e.to_string()))?;
        s.push('\n');
        fs::write(self.root.join(MANIFEST_FILE), s)?;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK_FILE));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_writer_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let a = OutputDir::create(dir.path()).unwrap();
        assert!(matches!(OutputDir::create(dir.path()), Err(CliError::Config(_))));
        drop(a);
        assert!(OutputDir::create(dir.path()).is_ok());
    }

    #[test]
    fn artifacts_are_hashed() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_str("sub/a.txt", "abc").unwrap();
        let a = &out.artifacts()[0];
        assert_eq!(a.path, "sub/a.txt");
        assert_eq!(
            a.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        out.finish("test", None, "ok", serde_json::Value::Null).unwrap();
        assert!(dir.path().join(MANIFEST_FILE).exists());
        assert!(!dir.path().join(LOCK_FILE).exists());
    }
}
