//! Artifact writers. Every file carries the config hash and the code
//! version, JSON as a `meta` object, JSON-lines as a leading meta line,
//! CSV as a comment header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sqpulse::hilbert::Checkpoint;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub config_hash: String,
    pub version: String,
}

impl Meta {
    pub fn new(config_hash: &str) -> Self {
        Meta {
            config_hash: config_hash.to_string(),
            version: VERSION.to_string(),
        }
    }
}

pub struct ArtifactDir {
    dir: PathBuf,
    prefix: String,
    meta: Meta,
}

impl ArtifactDir {
    pub fn new(dir: &Path, prefix: &str, meta: Meta) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactDir {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            meta,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{name}", self.prefix))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, data: &T) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let doc = json!({ "meta": self.meta, "data": data });
        fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        Ok(path)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        writeln!(file, "{}", serde_json::to_string(&json!({ "meta": self.meta }))?)?;
        for row in rows {
            writeln!(file, "{}", serde_json::to_string(row)?)?;
        }
        Ok(path)
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        writeln!(
            file,
            "# config_hash={} version={}",
            self.meta.config_hash, self.meta.version
        )?;
        writeln!(file, "{header}")?;
        for row in rows {
            writeln!(file, "{row}")?;
        }
        Ok(path)
    }
}

/// Checkpoint list as stored in state artifacts.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct StateSeries {
    pub checkpoints: Vec<Checkpoint>,
}

/// Loads a `{meta, data}` JSON artifact back; used by `compare`.
pub fn read_state_series(path: &Path) -> std::io::Result<(serde_json::Value, StateSeries)> {
    let text = fs::read_to_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let meta = doc.get("meta").cloned().unwrap_or(serde_json::Value::Null);
    let data = doc
        .get("data")
        .cloned()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "missing data"))?;
    let series: StateSeries = serde_json::from_value(data)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    Ok((meta, series))
}
