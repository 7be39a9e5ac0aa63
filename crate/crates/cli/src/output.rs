//! Artifact writing. Everything except `timing.json` is a deterministic
//! function of the inputs and the resolved configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn sub(&self, name: &str) -> CliResult<Self> {
        Self::create(&self.root.join(name))
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_run_config(&self, config: &RunConfig) -> CliResult<()> {
        self.write_json("run_config.json", config)
    }
}

/// Wall-clock seconds per stage, kept apart from reproducible outputs.
#[derive(Debug, Default, Serialize)]
pub struct Timing {
    stages: Vec<(String, f64)>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Timing {
    pub fn new() -> Self {
        Self { stages: Vec::new(), started: Some(Instant::now()) }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn write(&self, out: &OutDir) -> CliResult<()> {
        let total = self.started.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0);
        let stages: serde_json::Map<String, serde_json::Value> =
            self.stages.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
        out.write_json("timing.json", &serde_json::json!({ "total_secs": total, "stages": stages }))
    }
}
