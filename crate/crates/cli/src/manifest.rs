//! One JSON manifest per artifact-producing run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Argument vector after `--config` expansion; re-running it reproduces
    /// the artifacts.
    pub command_line: Vec<String>,
    pub subcommand: String,
    /// Every parsed option, defaults included.
    pub config: Value,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub metrics: Map<String, Value>,
}

pub struct ManifestBuilder {
    command_line: Vec<String>,
    subcommand: String,
    config: Value,
    seed: Option<u64>,
    started: DateTime<Utc>,
    outputs: Vec<PathBuf>,
    metrics: Map<String, Value>,
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl ManifestBuilder {
    pub fn new(command_line: Vec<String>, subcommand: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            command_line,
            subcommand: subcommand.to_string(),
            config,
            seed,
            started: Utc::now(),
            outputs: Vec::new(),
            metrics: Map::new(),
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    /// Non-finite numbers have no JSON form and are stored as strings.
    pub fn metric_f64(&mut self, key: &str, value: f64) {
        let v = serde_json::Number::from_f64(value).map_or_else(|| Value::String(value.to_string()), Value::Number);
        self.metrics.insert(key.to_string(), v);
    }

    pub fn write(self, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command_line: self.command_line,
            subcommand: self.subcommand,
            config: self.config,
            seed: self.seed,
            started: stamp(self.started),
            finished: stamp(Utc::now()),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            metrics: self.metrics,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// `<file>.run.json` next to a single-file artifact.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    path.with_file_name(name)
}
