//! Output files of a run and the manifest that lists them.

use std::path::{Path, PathBuf};

use lplab::output::CsvTable;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

/// Collects the files of one run in its output directory.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Validation(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(RunOutput { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn register(&mut self, name: &str) -> Result<PathBuf> {
        if name == MANIFEST || name.contains(['/', '\\']) {
            return Err(HarnessError::Validation(format!("invalid report file name `{name}`")));
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(self.dir.join(name))
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let path = self.register(name)?;
        let file = std::fs::File::create(path)?;
        table.write(std::io::BufWriter::new(file))?;
        Ok(())
    }

    /// Writes through a caller-supplied CSV writer.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> lplab::Result<()>) -> Result<()> {
        let path = self.register(name)?;
        let mut buf = Vec::new();
        f(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.register(name)?;
        std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(self, config: &ExperimentConfig) -> Result<Manifest> {
        let manifest = Manifest {
            experiment: config.experiment.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            files: self.files.clone(),
        };
        std::fs::write(self.dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}
