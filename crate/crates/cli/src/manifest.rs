//! Run manifest: written before any work starts, finalized with a status on
//! exit. Timestamps and wall-clock live here and only here, so the primary
//! output files stay byte-identical across reruns.

use std::path::{Path, PathBuf};

use serde::Serialize;

use socnn_core::Result;

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub resolved_config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub wall_clock_seconds: Option<f64>,
    pub status: String,
}

pub struct ManifestHandle {
    path: PathBuf,
    manifest: RunManifest,
    start: std::time::Instant,
}

impl ManifestHandle {
    pub fn begin(
        out_dir: &Path,
        subcommand: &str,
        resolved_config: serde_json::Value,
        inputs: Vec<String>,
        outputs: Vec<String>,
        seed: Option<u64>,
    ) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            resolved_config,
            inputs,
            outputs,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            wall_clock_seconds: None,
            status: "running".to_string(),
        };
        let handle = Self {
            path: out_dir.join("manifest.json"),
            manifest,
            start: std::time::Instant::now(),
        };
        handle.write()?;
        Ok(handle)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&self.path, text)?;
        Ok(())
    }

    /// Marks the run finished; `ok` only when every declared output exists.
    pub fn finish(mut self, ok: bool) -> Result<bool> {
        let outputs_present = self
            .manifest
            .outputs
            .iter()
            .all(|p| Path::new(p).exists());
        let status_ok = ok && outputs_present;
        self.manifest.status = if status_ok { "ok" } else { "failed" }.to_string();
        self.manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.manifest.wall_clock_seconds = Some(self.start.elapsed().as_secs_f64());
        self.write()?;
        Ok(status_ok)
    }
}
