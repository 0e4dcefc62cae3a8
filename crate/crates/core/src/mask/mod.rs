//! Binary region masks and the soft grids the autoencoder works on.
//!
//! A [`Mask`] is a row-major grid of booleans. A [`SoftGrid`] is the same
//! shape filled with reals in `[0, 1]`, used both for area-averaged inputs
//! and for predicted per-cell probabilities. [`RleMask`] is the compact
//! interchange form; see [`rle`].

pub mod pbm;
pub mod resample;
pub mod rle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use resample::{binarize, downsample};
pub use rle::{rle_decode, rle_encode, RleMask};

/// Binary 2D region mask, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMask(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "{} cells for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from 0/1 bytes; any other byte value is rejected.
    pub fn from_u8(width: usize, height: usize, cells: &[u8]) -> Result<Self> {
        let bits = cells
            .iter()
            .map(|&c| match c {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidMask(format!("cell value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Mask::new(width, height, bits)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Mask::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Mask::new(width, height, vec![true; width * height])
    }

    /// Builds a mask by evaluating `f(x, y)` on every cell.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Number of foreground cells.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the foreground, if any.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    fn check_same_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// `(|a ∧ b|, |a ∨ b|)`.
    pub fn intersection_union(&self, other: &Mask) -> Result<(usize, usize)> {
        self.check_same_dims(other)?;
        let mut inter = 0;
        let mut union = 0;
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok((inter, union))
    }

    /// Cellwise OR.
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_same_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Mask::new(self.width, self.height, bits)
    }

    /// Cellwise `self ∧ ¬other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.check_same_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Mask::new(self.width, self.height, bits)
    }
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Mask {}x{} (area {})", self.width, self.height, self.area())?;
        for y in 0..self.height {
            for x in 0..self.width {
                f.write_str(if self.get(x, y) { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Mask intersection-over-union. Two empty masks have IoU 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    let (inter, union) = a.intersection_union(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Real-valued grid with every cell in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SoftGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!("value {v} outside [0, 1]")));
        }
        Ok(SoftGrid {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        SoftGrid::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl From<&Mask> for SoftGrid {
    fn from(m: &Mask) -> Self {
        SoftGrid {
            width: m.width,
            height: m.height,
            values: m.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Line-delimited record form of a mask: `{"width", "height", "rle_runs"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub width: usize,
    pub height: usize,
    pub rle_runs: Vec<u64>,
}

impl MaskRecord {
    pub fn from_mask(m: &Mask) -> Self {
        let rle = rle_encode(m);
        MaskRecord {
            width: rle.width(),
            height: rle.height(),
            rle_runs: rle.runs().to_vec(),
        }
    }

    pub fn to_mask(&self) -> Result<Mask> {
        rle_decode(&RleMask::new(self.width, self.height, self.rle_runs.clone())?)
    }
}

impl From<&RleMask> for MaskRecord {
    fn from(r: &RleMask) -> Self {
        MaskRecord {
            width: r.width(),
            height: r.height(),
            rle_runs: r.runs().to_vec(),
        }
    }
}

impl TryFrom<&MaskRecord> for RleMask {
    type Error = Error;

    fn try_from(r: &MaskRecord) -> Result<Self> {
        RleMask::new(r.width, r.height, r.rle_runs.clone())
    }
}
