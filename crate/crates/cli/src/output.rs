//! Run manifests and report writers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Provenance embedded in every report. Wallclock is only recorded with
/// `--timing` so that repeated runs produce identical files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<String>,
    pub config: Value,
    pub wallclock_ms: f64,
}

pub struct Run {
    command: String,
    inputs: Vec<String>,
    config: Value,
    started: Option<Instant>,
}

impl Run {
    pub fn new(command: &str, inputs: &[&Path], config: Value, timing: bool) -> Self {
        Self {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            started: timing.then(Instant::now),
        }
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            tool: "metra",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            inputs: self.inputs.clone(),
            config: self.config.clone(),
            wallclock_ms: self.started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3),
        }
    }

    /// JSON report `{manifest, ..body}` written to `out`, or stdout without one.
    pub fn emit_json(&self, out: Option<&PathBuf>, body: Value) -> Result<(), CliError> {
        let mut obj = Map::new();
        obj.insert("manifest".into(), serde_json::to_value(self.manifest()).expect("manifest serializes"));
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("report".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&Value::Object(obj)).expect("report serializes") + "\n";
        match out {
            Some(path) => write_file(path, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    /// CSV file whose first line is a `#` comment holding the manifest.
    pub fn emit_csv<R: Serialize>(&self, path: &Path, rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        let manifest = serde_json::to_string(&self.manifest()).expect("manifest serializes");
        let text = format!("# manifest {manifest}\n{}", String::from_utf8(body).expect("csv is utf-8"));
        write_file(path, &text)
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}
