use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Version string recorded in manifests.
pub fn version_string() -> String {
    match option_env!("SYMVI_GIT_DESCRIBE") {
        Some(v) if !v.is_empty() => v.to_string(),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub status: RunStatus,
    pub config: BTreeMap<String, String>,
    pub started_unix: u64,
    pub wall_clock_secs: Option<f64>,
    pub outputs: Vec<String>,
    pub error: Option<String>,
}

/// A manifest on disk, written as soon as the run starts.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl ManifestWriter {
    pub fn start(out_dir: &Path, experiment: &str, config: BTreeMap<String, String>) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let w = ManifestWriter {
            path: out_dir.join("manifest.json"),
            manifest: RunManifest {
                experiment: experiment.to_string(),
                version: version_string(),
                status: RunStatus::Running,
                config,
                started_unix,
                wall_clock_secs: None,
                outputs: Vec::new(),
                error: None,
            },
            started: Instant::now(),
        };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&self.path, text + "\n")?;
        Ok(())
    }

    pub fn add_output(&mut self, name: &str) {
        self.manifest.outputs.push(name.to_string());
    }

    pub fn finish(mut self, outcome: std::result::Result<(), String>) -> Result<RunManifest> {
        self.manifest.wall_clock_secs = Some(self.started.elapsed().as_secs_f64());
        match outcome {
            Ok(()) => self.manifest.status = RunStatus::Completed,
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e);
            }
        }
        self.write()?;
        Ok(self.manifest)
    }
}

/// Write rows with a header derived from the row type's field names.
pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
