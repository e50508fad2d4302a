//! Run manifests. A manifest captures everything needed to reproduce
//! its run: command, resolved configuration, seed, and input paths.
//! It is written last, so its presence marks a completed run.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub checkpoint_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub inputs: BTreeMap<String, String>,
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize) -> Manifest {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            checkpoint_version: gce::training::CHECKPOINT_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            threads,
            inputs: BTreeMap::new(),
            config: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(name.to_string(), value.to_string());
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
