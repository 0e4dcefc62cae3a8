//! The run configuration file (TOML).
//!
//! ```toml
//! [train]
//! epochs = 40
//! hidden = 256
//! seed = 0
//!
//! [train.quant]
//! scheme = "rq"
//! codebook_size = 256
//! steps = 2
//!
//! [data]
//! count = 10000
//! grid_size = 32
//!
//! [eval]
//! held_out = 1000
//!
//! [paths]
//! out_dir = "out"
//!
//! [ablate]
//! cells = ["vq-1024", "rq-1024x2"]
//! seeds = [1, 2, 3]
//! ```
//!
//! Every section and key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use masktok::ablate::Cell;
use masktok::autoencoder::TrainConfig;
use masktok::corpus::ShapeGenConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: ShapeGenConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
    pub ablate: AblateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Size of the held-out shape split scored after training.
    pub held_out: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { held_out: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.mtck`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<out_dir>/metrics.jsonl`.
    pub metrics_log: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { out_dir: PathBuf::from("out"), checkpoint: None, metrics_log: None }
    }
}

impl Paths {
    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.mtck"))
    }

    pub fn metrics_log(&self) -> PathBuf {
        self.metrics_log.clone().unwrap_or_else(|| self.out_dir.join("metrics.jsonl"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub cells: Vec<String>,
    /// Empty means the single seed of `[train]`.
    pub seeds: Vec<u64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            cells: ["vq-1024", "rq-1024x2", "rq-256x2", "rq-256x4"].map(String::from).to_vec(),
            seeds: vec![],
        }
    }
}

impl AblateConfig {
    pub fn parsed_cells(&self) -> anyhow::Result<Vec<Cell>> {
        self.cells.iter().map(|c| c.parse::<Cell>().map_err(anyhow::Error::from)).collect()
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Environment and flag overrides: the seed drives both the model and
    /// the shape generator.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out_dir: Option<&Path>) {
        if let Some(seed) = seed {
            self.train.seed = seed;
            self.data.seed = seed;
        }
        if let Some(dir) = out_dir {
            self.paths.out_dir = dir.to_path_buf();
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.train.validate().context("[train]")?;
        self.data.validate().context("[data]")?;
        if self.eval.held_out == 0 {
            bail!("[eval] held_out must be positive");
        }
        self.ablate.parsed_cells().context("[ablate] cells")?;
        Ok(())
    }
}
