//! Finite scalar quantization: each coordinate is squashed into `[-1, 1]`
//! with `tanh` and snapped to one of `L` evenly spaced levels
//! `-1 + 2j/(L-1)`. The composite code is the mixed-radix number formed by
//! the per-coordinate level indices, first coordinate least significant.

use crate::error::{Error, Result};
use crate::quant::{QuantConfig, QuantResult};

pub fn fsq_level_value(j: usize, levels: usize) -> f64 {
    -1.0 + 2.0 * j as f64 / (levels - 1) as f64
}

fn level_index(x: f64, levels: usize) -> usize {
    let t = (x.tanh() + 1.0) * 0.5 * (levels - 1) as f64;
    (t.round() as usize).min(levels - 1)
}

/// Quantizes an already-projected vector (one coordinate per entry of
/// `cfg.fsq_levels`). The retrieved vector is the level vector; FSQ has no
/// codebook to commit to, so `commit_loss` is zero.
pub fn fsq_quantize(u: &[f64], cfg: &QuantConfig) -> Result<QuantResult> {
    let levels = &cfg.fsq_levels;
    if levels.is_empty() {
        return Err(Error::InvalidQuantConfig("fsq_levels must not be empty".into()));
    }
    if let Some(l) = levels.iter().find(|&&l| l < 2) {
        return Err(Error::InvalidQuantConfig(format!("FSQ level count {l} < 2")));
    }
    if u.len() != levels.len() {
        return Err(Error::VectorDim {
            expected: levels.len(),
            got: u.len(),
        });
    }
    let mut code = 0usize;
    let mut radix = 1usize;
    let mut level_vec = Vec::with_capacity(u.len());
    for (&x, &l) in u.iter().zip(levels) {
        if !x.is_finite() {
            return Err(Error::InvalidQuantConfig(format!("non-finite input component {x}")));
        }
        let j = level_index(x, l);
        code += j * radix;
        radix *= l;
        level_vec.push(fsq_level_value(j, l));
    }
    let residual: Vec<f64> = u.iter().zip(&level_vec).map(|(a, b)| a - b).collect();
    Ok(QuantResult {
        codes: vec![code],
        retrieved: vec![level_vec.clone()],
        residuals: vec![residual],
        quantized: level_vec,
        commit_loss: 0.0,
    })
}

/// Inverse of the mixed-radix composition: level vector for a composite code.
pub fn fsq_index_to_levels(code: usize, levels: &[usize]) -> Result<Vec<f64>> {
    let total: usize = levels.iter().product();
    if code >= total {
        return Err(Error::CodeOutOfRange {
            level: 0,
            index: code,
            size: total,
        });
    }
    let mut rest = code;
    Ok(levels
        .iter()
        .map(|&l| {
            let j = rest % l;
            rest /= l;
            fsq_level_value(j, l)
        })
        .collect())
}
