//! Quantizer ablations: train one model per cell on a shared dataset and
//! seed, then score each on a shared held-out set.
//!
//! Cells are written as `vq-1024`, `rq-256x2`, `fsq-8.5.5.5` or `identity`.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Model, TrainConfig, Trainer};
use crate::corpus::{gen_synthetic, ShapeGenConfig};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::quant::{QuantConfig, Scheme};

/// One quantizer setting in an ablation grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub scheme: Scheme,
    pub codebook_size: usize,
    pub steps: usize,
    pub fsq_levels: Vec<usize>,
}

impl Cell {
    pub fn vq(k: usize) -> Self {
        Cell { scheme: Scheme::Vq, codebook_size: k, steps: 1, fsq_levels: vec![] }
    }

    pub fn rq(k: usize, steps: usize) -> Self {
        Cell { scheme: Scheme::Rq, codebook_size: k, steps, fsq_levels: vec![] }
    }

    /// Applies the cell on top of `base`, keeping every other quantizer knob.
    pub fn quant_config(&self, base: &QuantConfig) -> QuantConfig {
        let q = QuantConfig {
            scheme: self.scheme,
            codebook_size: self.codebook_size,
            steps: self.steps,
            ..base.clone()
        };
        match self.scheme {
            Scheme::Fsq => QuantConfig {
                codebook_size: self.fsq_levels.iter().product(),
                fsq_levels: self.fsq_levels.clone(),
                ..q
            },
            Scheme::Identity => QuantConfig { commit_weight: 0.0, ..q },
            _ => q,
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.scheme {
            Scheme::Vq => write!(f, "vq-{}", self.codebook_size),
            Scheme::Rq => write!(f, "rq-{}x{}", self.codebook_size, self.steps),
            Scheme::Fsq => {
                let l: Vec<String> = self.fsq_levels.iter().map(usize::to_string).collect();
                write!(f, "fsq-{}", l.join("."))
            }
            Scheme::Identity => f.write_str("identity"),
        }
    }
}

impl std::str::FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidQuantConfig(format!("cannot parse ablation cell {s:?}"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let lower = s.trim().to_ascii_lowercase();
        if lower == "identity" {
            return Ok(Cell { scheme: Scheme::Identity, codebook_size: 0, steps: 0, fsq_levels: vec![] });
        }
        let (kind, rest) = lower.split_once('-').ok_or_else(bad)?;
        match kind {
            "vq" => Ok(Cell::vq(num(rest)?)),
            "rq" => {
                let (k, steps) = rest.split_once('x').ok_or_else(bad)?;
                Ok(Cell::rq(num(k)?, num(steps)?))
            }
            "fsq" => {
                let levels = rest.split('.').map(num).collect::<Result<Vec<_>>>()?;
                Ok(Cell {
                    scheme: Scheme::Fsq,
                    codebook_size: levels.iter().product(),
                    steps: 1,
                    fsq_levels: levels,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Shared training setup. `train.quant` supplies everything a cell does
/// not override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSetup {
    pub train: TrainConfig,
    pub data: ShapeGenConfig,
    pub held_out: ShapeGenConfig,
}

impl Default for AblationSetup {
    fn default() -> Self {
        let data = ShapeGenConfig { count: 5000, ..ShapeGenConfig::default() };
        AblationSetup {
            train: TrainConfig { hidden: 128, epochs: 20, ..TrainConfig::default() },
            held_out: held_out_split(&data, 1000),
            data,
        }
    }
}

impl AblationSetup {
    /// Same setup with one seed driving the model, the training shapes and
    /// the held-out shapes.
    pub fn with_seed(&self, seed: u64) -> Self {
        let data = ShapeGenConfig { seed, ..self.data.clone() };
        AblationSetup {
            train: TrainConfig { seed, ..self.train.clone() },
            held_out: held_out_split(&data, self.held_out.count),
            data,
        }
    }
}

/// Seed offset separating a held-out split from its training shapes.
pub const HELD_OUT_SEED_OFFSET: u64 = 1_000_003;

/// A generator config for `count` shapes drawn like `train` but from an
/// unrelated seed.
pub fn held_out_split(train: &ShapeGenConfig, count: usize) -> ShapeGenConfig {
    ShapeGenConfig {
        count,
        seed: train.seed.wrapping_add(HELD_OUT_SEED_OFFSET),
        ..train.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub scheme: Scheme,
    pub codebook_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub r_acc: Option<f64>,
    pub utilization: Option<f64>,
    pub error: Option<String>,
}

/// Trains one model and scores it on `held_out`.
pub fn run_cell(setup: &AblationSetup, cell: &Cell, train: &[Mask], held_out: &[Mask]) -> Result<(f64, f64)> {
    let cfg = TrainConfig {
        quant: cell.quant_config(&setup.train.quant),
        ..setup.train.clone()
    };
    let mut t = Trainer::new(Model::init(cfg)?);
    t.fit(train, None)?;
    Ok((t.model.eval_r_acc(held_out)?, t.model.code_utilization(held_out)?))
}

/// Runs every cell in order. A failing cell yields a row with `error` set
/// and the rest still run.
pub fn run_ablation(setup: &AblationSetup, cells: &[Cell]) -> Result<Vec<AblationRow>> {
    let train = gen_synthetic(&setup.data)?;
    let held_out = gen_synthetic(&setup.held_out)?;
    let rows = cells
        .iter()
        .map(|cell| {
            let outcome = run_cell(setup, cell, &train, &held_out);
            let (r_acc, utilization, error) = match outcome {
                Ok((r, u)) => (Some(r), Some(u), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            AblationRow {
                cell: cell.to_string(),
                scheme: cell.scheme,
                codebook_size: cell.codebook_size,
                steps: cell.steps,
                seed: setup.train.seed,
                r_acc,
                utilization,
                error,
            }
        })
        .collect();
    Ok(rows)
}

/// Fixed-width text table of ablation rows.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<16} {:>6} {:>8} {:>8}  {}\n", "cell", "seed", "r-Acc", "util", "error");
    for r in rows {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        out.push_str(&format!(
            "{:<16} {:>6} {:>8} {:>8}  {}\n",
            r.cell,
            r.seed,
            f(r.r_acc),
            f(r.utilization),
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_parse_and_print() {
        for s in ["vq-1024", "rq-256x2", "fsq-8.5.5.5", "identity"] {
            let c: Cell = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert_eq!("RQ-256x4".parse::<Cell>().unwrap(), Cell::rq(256, 4));
        for s in ["", "vq", "rq-256", "rq-axb", "lfq-4"] {
            assert!(s.parse::<Cell>().is_err(), "{s}");
        }
    }

    #[test]
    fn bad_cell_is_recorded_and_others_run() {
        let data = ShapeGenConfig { count: 40, grid_size: 8, ..ShapeGenConfig::default() };
        let setup = AblationSetup {
            train: TrainConfig { grid_size: 8, embed_dim: 4, hidden: 8, epochs: 1, batch_size: 8, ..TrainConfig::default() },
            held_out: held_out_split(&data, 10),
            data,
        };
        let rows = run_ablation(&setup, &[Cell::vq(0), Cell::rq(8, 2)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_some() && rows[0].r_acc.is_none());
        assert!(rows[1].error.is_none() && rows[1].r_acc.is_some());
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn with_seed_moves_every_seed() {
        let s = AblationSetup::default().with_seed(7);
        assert_eq!(s.train.seed, 7);
        assert_eq!(s.data.seed, 7);
        assert_eq!(s.held_out.seed, 7 + HELD_OUT_SEED_OFFSET);
        assert_eq!(s.held_out.count, 1000);
    }
}
