use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::Override;

/// Record of one invocation: what went in, what came out, and how long each
/// stage took.
#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: Option<PathBuf>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub overrides: BTreeMap<String, Override>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Wall time per stage (ms).
    pub timings_ms: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            ..Self::default()
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Runs `f`, adding its wall time to `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings_ms.entry(stage.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
