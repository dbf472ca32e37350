use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use textnet_core::corpus::TOKENIZATION;
use textnet_core::io::file_sha256;
use textnet_core::Result;

/// A file a command read or wrote, by path relative to its directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(base: &Path, rel: &str) -> Result<Self> {
        Ok(Artifact {
            path: rel.to_string(),
            sha256: file_sha256(&base.join(rel))?,
        })
    }
}

/// Written by `prepare`. Holds no timings so reruns stay byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub inputs: Vec<Artifact>,
    pub tokenization: String,
    pub node_count: usize,
    pub edge_count: usize,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
    pub min_count: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub ratio: f64,
    pub unseen_ratio: Option<f64>,
    pub has_labels: bool,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Transductive,
    Unseen,
}

/// Everything needed to repeat a command on a run directory: the resolved
/// configuration, the prepared inputs it consumed, seeds, and hashes of
/// what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub prepared_dir: PathBuf,
    pub protocol: Protocol,
    pub tokenization: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub timings_s: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, prepared_dir: &Path, protocol: Protocol, config: Vec<(String, String)>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            prepared_dir: prepared_dir.to_path_buf(),
            protocol,
            tokenization: TOKENIZATION.to_string(),
            config: config.into_iter().collect(),
            seeds: BTreeMap::new(),
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_s: BTreeMap::new(),
        }
    }
}
