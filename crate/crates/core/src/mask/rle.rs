//! Column-major run-length encoding in the COCO convention: runs alternate
//! background/foreground and always start with a (possibly zero) background
//! run.

use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RleMask {
    width: usize,
    height: usize,
    runs: Vec<u64>,
}

impl RleMask {
    pub fn new(width: usize, height: usize, runs: Vec<u64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRle(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if runs.is_empty() {
            return Err(Error::InvalidRle("no runs".into()));
        }
        if let Some(pos) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(Error::InvalidRle(format!("zero-length run at position {}", pos + 1)));
        }
        let total = runs
            .iter()
            .try_fold(0u64, |acc, &r| acc.checked_add(r))
            .ok_or_else(|| Error::InvalidRle("run total overflows".into()))?;
        let cells = (width * height) as u64;
        if total != cells {
            return Err(Error::InvalidRle(format!(
                "runs sum to {total}, expected {cells} for {width}x{height}"
            )));
        }
        Ok(RleMask {
            width,
            height,
            runs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn runs(&self) -> &[u64] {
        &self.runs
    }

    /// Foreground cell count (sum of odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }
}

pub fn rle_encode(m: &Mask) -> RleMask {
    let (w, h) = m.dims();
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = m.get(x, y);
            if v != current {
                runs.push(count);
                count = 0;
                current = v;
            }
            count += 1;
        }
    }
    runs.push(count);
    RleMask {
        width: w,
        height: h,
        runs,
    }
}

pub fn rle_decode(r: &RleMask) -> Result<Mask> {
    let (w, h) = (r.width, r.height);
    let mut mask = Mask::empty(w, h)?;
    let mut idx = 0usize;
    let mut value = false;
    for &run in &r.runs {
        let end = idx + run as usize;
        if end > w * h {
            return Err(Error::InvalidRle("runs overflow the grid".into()));
        }
        if value {
            for i in idx..end {
                mask.set(i / h, i % h, true);
            }
        }
        idx = end;
        value = !value;
    }
    if idx != w * h {
        return Err(Error::InvalidRle(format!("runs cover {idx} of {} cells", w * h)));
    }
    Ok(mask)
}
