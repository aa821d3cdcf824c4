//! Per-stage manifests. The checksummed payload is deterministic; wall-clock
//! timings go to a separate file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stage: String,
    pub wall_clock_secs: f64,
}

/// Collects the files a stage reads and writes.
pub struct ManifestBuilder {
    stage: String,
    config_sha256: Option<String>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(stage: &str, config_sha256: Option<String>, seed: Option<u64>) -> Self {
        ManifestBuilder {
            stage: stage.into(),
            config_sha256,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    fn digests(dir: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
        let mut out: Vec<FileDigest> = paths
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: fsutil::display_path(&fsutil::relative_path(dir, p)),
                    sha256: fsutil::sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        out.sort_by(|a, b| a.path.cmp(&b.path));
        out.dedup();
        Ok(out)
    }

    /// Writes `<name>.json` and `<name>.timings.json` into `dir`.
    pub fn finish(self, dir: &Path, name: &str) -> Result<Manifest> {
        let manifest = Manifest {
            stage: self.stage.clone(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_sha256,
            seed: self.seed,
            inputs: Self::digests(dir, &self.inputs)?,
            outputs: Self::digests(dir, &self.outputs)?,
        };
        fsutil::write_json(&dir.join(format!("{name}.json")), &manifest)?;
        let timings = Timings {
            stage: self.stage,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        fsutil::write_json(&dir.join(format!("{name}.timings.json")), &timings)?;
        Ok(manifest)
    }
}
