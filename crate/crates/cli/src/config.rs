//! Optional TOML config file. Every key is optional; command-line flags win.
//!
//! ```toml
//! seed = 7
//! per_op = 2000
//! k = [1, 5, 10, 100]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub vocab: Option<PathBuf>,
    pub per_op: Option<usize>,
    pub positives: Option<usize>,
    pub negatives: Option<usize>,
    pub split_ratio: Option<f64>,
    pub docs: Option<usize>,
    pub queries_per_template: Option<usize>,
    pub dim: Option<usize>,
    pub buckets: Option<usize>,
    pub loss: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub eval_every: Option<usize>,
    pub steps: Option<usize>,
    pub phase2_batch_size: Option<usize>,
    pub phase2_lr: Option<f64>,
    pub train_queries: Option<usize>,
    pub dev_queries: Option<usize>,
    pub k: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
