//! Run outputs: CSV tables, JSON summaries, a schema file, and a manifest.
//!
//! Every run directory ends up with the data files a command produced,
//! `schema.json` describing each file's columns and units, and
//! `manifest.json` recording the command, config hash, seed and shot count
//! so a run can be reproduced byte for byte.  Data files never embed wall
//! time; the manifest timestamp can be pinned through the
//! `MAGSIM_TIMESTAMP` environment variable when stable bytes matter.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("could not serialize {what}: {source}")]
    Json {
        what: String,
        source: serde_json::Error,
    },
}

/// Hex SHA-256 of a byte string; used to fingerprint the config.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One CSV cell.  Floats print in shortest round-trip form, so identical
/// runs produce identical bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvValue {
    Float(f64),
    Int(u64),
    Text(String),
}

impl fmt::Display for CsvValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CsvValue::Float(v) => write!(f, "{v:?}"),
            CsvValue::Int(v) => write!(f, "{v}"),
            CsvValue::Text(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    write!(f, "\"{}\"", s.replace('"', "\"\""))
                } else {
                    write!(f, "{s}")
                }
            }
        }
    }
}

impl From<f64> for CsvValue {
    fn from(v: f64) -> Self {
        CsvValue::Float(v)
    }
}
impl From<u64> for CsvValue {
    fn from(v: u64) -> Self {
        CsvValue::Int(v)
    }
}
impl From<&str> for CsvValue {
    fn from(v: &str) -> Self {
        CsvValue::Text(v.to_string())
    }
}
impl From<String> for CsvValue {
    fn from(v: String) -> Self {
        CsvValue::Text(v)
    }
}

/// Column description that ends up in `schema.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
    pub description: String,
}

/// Shorthand for building a [`ColumnSpec`].
pub fn col(name: &str, unit: &str, description: &str) -> ColumnSpec {
    ColumnSpec {
        name: name.to_string(),
        unit: unit.to_string(),
        description: description.to_string(),
    }
}

/// Identifies a run so it can be reproduced: command, config fingerprint,
/// seed and shot count.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub shots: u64,
    pub timestamp: String,
    pub tool: String,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seed: u64, shots: u64) -> Self {
        let timestamp = std::env::var("MAGSIM_TIMESTAMP").unwrap_or_else(|_| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs().to_string())
                .unwrap_or_else(|_| "0".to_string())
        });
        RunManifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            shots,
            timestamp,
            tool: format!("magsim {}", env!("CARGO_PKG_VERSION")),
            files: Vec::new(),
        }
    }
}

/// A run's output directory.  Tracks what was written so `finish` can emit
/// the schema and manifest covering exactly the files present.
pub struct OutDir {
    root: PathBuf,
    schema: Vec<Value>,
    files: Vec<String>,
}

impl OutDir {
    /// Create (or reuse) the directory.
    pub fn create(path: &Path) -> Result<Self, OutputError> {
        std::fs::create_dir_all(path).map_err(|source| OutputError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(OutDir {
            root: path.to_path_buf(),
            schema: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), OutputError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|source| OutputError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write a CSV table and record its schema.
    pub fn write_csv(
        &mut self,
        name: &str,
        description: &str,
        columns: &[ColumnSpec],
        rows: &[Vec<CsvValue>],
    ) -> Result<(), OutputError> {
        let mut text = String::new();
        let header: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), columns.len(), "row width in {name}");
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())?;
        self.schema.push(json!({
            "file": name,
            "format": "csv",
            "description": description,
            "columns": columns,
        }));
        Ok(())
    }

    /// Write a JSON document and record it in the schema.
    pub fn write_json(
        &mut self,
        name: &str,
        description: &str,
        value: &Value,
    ) -> Result<(), OutputError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|source| OutputError::Json {
                what: name.to_string(),
                source,
            })?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())?;
        self.schema.push(json!({
            "file": name,
            "format": "json",
            "description": description,
        }));
        Ok(())
    }

    /// Emit `schema.json` and `manifest.json`, consuming the directory.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), OutputError> {
        let schema = json!({ "files": self.schema });
        let mut text =
            serde_json::to_string_pretty(&schema).map_err(|source| OutputError::Json {
                what: "schema.json".to_string(),
                source,
            })?;
        text.push('\n');
        self.write_bytes("schema.json", text.as_bytes())?;

        manifest.files = self.files.clone();
        manifest.files.sort();
        let mut text =
            serde_json::to_string_pretty(&manifest).map_err(|source| OutputError::Json {
                what: "manifest.json".to_string(),
                source,
            })?;
        text.push('\n');
        self.write_bytes("manifest.json", text.as_bytes())?;
        Ok(())
    }
}
