//! Result files: atomic writes, CSV tables and the run provenance record.

use crate::error::Result;
use crate::model::SystemConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    // Temporary files are created owner-only; outputs get the usual mode.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A CSV table held in memory until it is written.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    /// Append a row of numbers, formatted in shortest round-trip form.
    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        self.writer.write_record(values.iter().map(|v| format!("{v:e}")))?;
        Ok(())
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.into_bytes()?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// SHA-256 of the canonical JSON form of a configuration.
pub fn config_hash(config: &SystemConfig) -> Result<String> {
    let bytes = serde_json::to_vec(&config.to_file())?;
    Ok(hex(&Sha256::digest(bytes)))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one command invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub arguments: Vec<String>,
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn table_format_round_trips() {
        let mut t = Table::new(&["t_s", "F"]).unwrap();
        t.row(&[1.5e-9, 0.1 + 0.2]).unwrap();
        let text = String::from_utf8(t.into_bytes().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t_s,F"));
        let v: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v, vec![1.5e-9, 0.1 + 0.2]);
    }

    #[test]
    fn config_hash_is_stable() {
        let c = SystemConfig::paper();
        assert_eq!(config_hash(&c).unwrap(), config_hash(&c.clone()).unwrap());
        let mut d = c.clone();
        d.subsystems[1].phase *= 1.0 + 1e-15;
        assert_ne!(config_hash(&c).unwrap(), config_hash(&d).unwrap());
    }
}
