use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Provenance record written beside each command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_secs: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        ManifestBuilder {
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                arguments: argv.iter().skip(1).cloned().collect(),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_secs: 0.0,
            },
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.manifest.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `<command>.manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> drivadv::Result<PathBuf> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        let path = dir.join(format!("{}.manifest.json", self.manifest.command));
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        bytes.push(b'\n');
        drivadv::fsio::write_atomic(&path, &bytes)?;
        Ok(path)
    }
}
