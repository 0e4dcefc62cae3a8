//! Vector quantizers: single-step VQ, multi-step residual RQ and FSQ.
//!
//! Residual quantization walks the levels in order. Level `ℓ` looks up the
//! code nearest to the current residual, subtracts it, and hands the new
//! residual on:
//!
//! ```text
//! e₁ = argmin ‖z − e‖²      r₁ = z − e₁
//! e₂ = argmin ‖r₁ − e‖²     r₂ = r₁ − e₂
//! q  = e₁ + e₂ + …
//! ```
//!
//! The commitment loss is the sum of squared residual norms,
//! `‖z − e₁‖² + ‖r₁ − e₂‖² + …`.

mod codebook;
pub mod file;
mod fsq;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use codebook::{utilization, Codebook, ReseedPolicy, EMA_EPSILON};
pub use file::{read_codebooks, write_codebooks, CODEBOOK_MAGIC, CODEBOOK_VERSION};
pub use fsq::{fsq_index_to_levels, fsq_level_value, fsq_quantize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Vq,
    Fsq,
    Rq,
    /// Pass-through quantizer (zero steps) for debugging the autoencoder.
    Identity,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Vq => "VQ",
            Scheme::Fsq => "FSQ",
            Scheme::Rq => "RQ",
            Scheme::Identity => "identity",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CodebookLearning {
    Ema { decay: f64 },
    /// Gradient steps on `‖sg(z) − e‖²` with the given learning rate.
    Gradient { lr: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub scheme: Scheme,
    pub codebook_size: usize,
    pub steps: usize,
    pub shared_codebooks: bool,
    pub commit_weight: f64,
    pub fsq_levels: Vec<usize>,
    pub learning: CodebookLearning,
    pub reseed_window: u32,
    pub reseed_noise: f64,
    /// Initialise codebooks from the first training batch instead of keeping
    /// the random draw.
    pub data_init: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            scheme: Scheme::Rq,
            codebook_size: 256,
            steps: 2,
            shared_codebooks: false,
            commit_weight: 0.05,
            fsq_levels: vec![16, 16, 16, 16],
            learning: CodebookLearning::Ema { decay: 0.99 },
            reseed_window: 256,
            reseed_noise: 1e-3,
            data_init: true,
        }
    }
}

impl QuantConfig {
    pub fn vq(codebook_size: usize) -> Self {
        QuantConfig {
            scheme: Scheme::Vq,
            codebook_size,
            steps: 1,
            ..QuantConfig::default()
        }
    }

    pub fn rq(codebook_size: usize, steps: usize) -> Self {
        QuantConfig {
            scheme: Scheme::Rq,
            codebook_size,
            steps,
            ..QuantConfig::default()
        }
    }

    pub fn fsq(levels: Vec<usize>) -> Self {
        QuantConfig {
            scheme: Scheme::Fsq,
            codebook_size: levels.iter().product(),
            steps: 1,
            fsq_levels: levels,
            ..QuantConfig::default()
        }
    }

    pub fn identity() -> Self {
        QuantConfig {
            scheme: Scheme::Identity,
            steps: 0,
            commit_weight: 0.0,
            ..QuantConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidQuantConfig(m));
        if !(self.commit_weight >= 0.0 && self.commit_weight.is_finite()) {
            return bad(format!("commit_weight {} must be finite and >= 0", self.commit_weight));
        }
        match self.learning {
            CodebookLearning::Ema { decay } if !(decay > 0.0 && decay < 1.0) => {
                return bad(format!("EMA decay {decay} outside (0, 1)"))
            }
            CodebookLearning::Gradient { lr } if !(lr > 0.0 && lr.is_finite()) => {
                return bad(format!("codebook lr {lr} must be positive"))
            }
            _ => {}
        }
        match self.scheme {
            Scheme::Vq | Scheme::Rq => {
                if self.codebook_size == 0 {
                    return bad("codebook_size must be positive".into());
                }
                if self.steps == 0 {
                    return bad(format!("{} needs at least one step", self.scheme));
                }
                if self.scheme == Scheme::Vq && self.steps != 1 {
                    return bad(format!("VQ uses exactly one step, got {}", self.steps));
                }
            }
            Scheme::Fsq => {
                if self.fsq_levels.is_empty() {
                    return bad("fsq_levels must not be empty".into());
                }
                if let Some(l) = self.fsq_levels.iter().find(|&&l| l < 2) {
                    return bad(format!("FSQ level count {l} < 2"));
                }
                if self.steps != 1 {
                    return bad(format!("FSQ uses exactly one step, got {}", self.steps));
                }
            }
            Scheme::Identity => {
                if self.steps != 0 {
                    return bad("identity quantizer has zero steps".into());
                }
            }
        }
        Ok(())
    }

    /// Size of the composite code space of one level (`K`, or the product
    /// of FSQ levels).
    pub fn level_size(&self) -> usize {
        match self.scheme {
            Scheme::Fsq => self.fsq_levels.iter().product(),
            _ => self.codebook_size,
        }
    }

    pub fn reseed_policy(&self) -> ReseedPolicy {
        ReseedPolicy {
            window: self.reseed_window,
            noise: self.reseed_noise,
        }
    }
}

/// Trace of one quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantResult {
    /// Selected code per level, in level order.
    pub codes: Vec<usize>,
    /// Retrieved vector per level (`e₁, e₂, …`).
    pub retrieved: Vec<Vec<f64>>,
    /// Residual after each level (`r₁ = z − e₁`, `r₂ = r₁ − e₂`, …).
    pub residuals: Vec<Vec<f64>>,
    /// Sum of the retrieved vectors.
    pub quantized: Vec<f64>,
    pub commit_loss: f64,
}

impl QuantResult {
    pub fn steps(&self) -> usize {
        self.codes.len()
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Residual quantization through `books`, one per level.
pub fn rq_quantize(z: &[f64], books: &[&Codebook]) -> Result<QuantResult> {
    if books.is_empty() {
        return Err(Error::InvalidQuantConfig("residual quantization needs at least one step".into()));
    }
    if let Some(x) = z.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidQuantConfig(format!("non-finite input component {x}")));
    }
    let mut codes = Vec::with_capacity(books.len());
    let mut retrieved = Vec::with_capacity(books.len());
    let mut residuals: Vec<Vec<f64>> = Vec::with_capacity(books.len());
    let mut quantized = vec![0.0; z.len()];
    let mut commit_loss = 0.0;
    for book in books {
        let input = residuals.last().map_or(z, Vec::as_slice);
        let (k, _) = book.nearest(input)?;
        let e = book.vector(k).to_vec();
        let r: Vec<f64> = input.iter().zip(&e).map(|(a, b)| a - b).collect();
        commit_loss += sq_norm(&r);
        for (q, x) in quantized.iter_mut().zip(&e) {
            *q += x;
        }
        codes.push(k);
        retrieved.push(e);
        residuals.push(r);
    }
    Ok(QuantResult {
        codes,
        retrieved,
        residuals,
        quantized,
        commit_loss,
    })
}

/// Nearest-neighbour lookup in a single codebook.
pub fn vq_quantize(z: &[f64], book: &Codebook) -> Result<QuantResult> {
    rq_quantize(z, &[book])
}

/// The codebooks of a VQ or RQ quantizer.
///
/// With shared codebooks a single book serves every level.
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookSet {
    pub scheme: Scheme,
    pub codebook_size: usize,
    pub dim: usize,
    pub steps: usize,
    pub shared: bool,
    pub books: Vec<Codebook>,
}

impl CodebookSet {
    /// Random initialisation per `cfg`. FSQ and identity quantizers own no
    /// codebooks and get an empty set.
    pub fn init(cfg: &QuantConfig, dim: usize, std: f64, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let n_books = match cfg.scheme {
            Scheme::Vq | Scheme::Rq if cfg.shared_codebooks => 1,
            Scheme::Vq | Scheme::Rq => cfg.steps,
            Scheme::Fsq | Scheme::Identity => 0,
        };
        let books = (0..n_books)
            .map(|_| Codebook::random(cfg.codebook_size, dim, std, rng))
            .collect::<Result<Vec<_>>>()?;
        let (size, d) = match cfg.scheme {
            Scheme::Fsq => (cfg.level_size(), cfg.fsq_levels.len()),
            _ => (cfg.codebook_size, dim),
        };
        Ok(CodebookSet {
            scheme: cfg.scheme,
            codebook_size: size,
            dim: d,
            steps: cfg.steps,
            shared: cfg.shared_codebooks,
            books,
        })
    }

    /// The codebook used at each level, in level order.
    pub fn levels(&self) -> Vec<&Codebook> {
        if self.books.is_empty() {
            return Vec::new();
        }
        (0..self.steps)
            .map(|l| if self.shared { &self.books[0] } else { &self.books[l] })
            .collect()
    }

    pub fn book_index(&self, level: usize) -> usize {
        if self.shared {
            0
        } else {
            level
        }
    }

    pub fn quantize(&self, z: &[f64]) -> Result<QuantResult> {
        rq_quantize(z, &self.levels())
    }

    /// Sum of the code vectors for `codes`, one per level.
    pub fn lookup(&self, codes: &[usize]) -> Result<Vec<f64>> {
        let levels = self.levels();
        if codes.len() != levels.len() {
            return Err(Error::CodeCount {
                expected: levels.len(),
                got: codes.len(),
            });
        }
        let mut q = vec![0.0; self.dim];
        for (level, (&k, book)) in codes.iter().zip(&levels).enumerate() {
            if k >= book.size() {
                return Err(Error::CodeOutOfRange {
                    level,
                    index: k,
                    size: book.size(),
                });
            }
            for (a, b) in q.iter_mut().zip(book.vector(k)) {
                *a += b;
            }
        }
        Ok(q)
    }
}
