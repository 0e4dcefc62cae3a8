//! Reconstruction losses. Training works on logits; the `SoftGrid` entry
//! points exist for evaluating predictions that are already probabilities.

use crate::error::{Error, Result};
use crate::mask::{Mask, SoftGrid};

/// Smoothing constant of the Dice loss.
pub const DICE_SMOOTH: f64 = 1.0;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-cell binary cross-entropy `max(x,0) − x·t + ln(1 + e^{−|x|})`.
#[inline]
pub fn bce_logit(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over cells, from logits.
pub fn bce_with_logits(logits: &[f64], truth: &[bool]) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(truth)
        .map(|(&x, &t)| bce_logit(x, t as u8 as f64))
        .sum();
    sum / logits.len() as f64
}

/// `1 − (2·Σpt + s) / (Σp + Σt + s)` with smoothing `s`.
pub fn dice_from_probs(probs: &[f64], truth: &[bool]) -> f64 {
    let (inter, sum_p, sum_t) = dice_sums(probs, truth);
    1.0 - (2.0 * inter + DICE_SMOOTH) / (sum_p + sum_t + DICE_SMOOTH)
}

pub(crate) fn dice_sums(probs: &[f64], truth: &[bool]) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_t = 0.0;
    for (&p, &t) in probs.iter().zip(truth) {
        if t {
            inter += p;
            sum_t += 1.0;
        }
        sum_p += p;
    }
    (inter, sum_p, sum_t)
}

fn check(pred: &SoftGrid, truth: &Mask) -> Result<()> {
    if pred.dims() != truth.dims() {
        return Err(Error::dims(pred.dims(), truth.dims()));
    }
    Ok(())
}

pub fn dice_loss(pred: &SoftGrid, truth: &Mask) -> Result<f64> {
    check(pred, truth)?;
    Ok(dice_from_probs(pred.values(), truth.bits()))
}

/// Mean binary cross-entropy of probabilities, evaluated through their
/// logits. Probabilities are clamped away from 0 and 1 first.
pub fn bce_loss(pred: &SoftGrid, truth: &Mask) -> Result<f64> {
    check(pred, truth)?;
    const CLAMP: f64 = 1e-15;
    let logits: Vec<f64> = pred
        .values()
        .iter()
        .map(|&p| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            p.ln() - (-p).ln_1p()
        })
        .collect();
    Ok(bce_with_logits(&logits, truth.bits()))
}
