use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Wall-clock data; the only part of an output that changes between
/// identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Timestamp {
    pub started_unix: u64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<InputHash>,
    pub config: Value,
    pub timestamp: Timestamp,
}

/// Reads input files and remembers their hashes.
pub struct Run {
    command: String,
    inputs: Vec<InputHash>,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn note(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.push(InputHash {
            path: label.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn finish(self, config: Value) -> Provenance {
        Provenance {
            tool: "mcmot",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            inputs: self.inputs,
            config,
            timestamp: Timestamp {
                started_unix: self
                    .started
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                elapsed_secs: self.clock.elapsed().as_secs_f64(),
            },
        }
    }
}

/// `body` (a JSON object) with a `provenance` entry appended.
pub fn with_provenance(body: impl Serialize, provenance: Provenance) -> Result<Value> {
    let mut map = match serde_json::to_value(body)? {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("provenance".into(), serde_json::to_value(provenance)?);
    Ok(Value::Object(map))
}

pub fn write_output(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_json(path: Option<&PathBuf>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(path, &text)
}
