use crate::error::{Error, Result};
use crate::mask::{Mask, SoftGrid};

/// Per-axis overlap weights: for each output cell, the `(input index, covered
/// length)` pairs, in units where one input cell has length `out / in`.
fn axis_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    // Work in integer units of 1/(input*output) to keep boundaries exact:
    // output cell j spans [j*input, (j+1)*input), input cell i spans
    // [i*output, (i+1)*output).
    (0..output)
        .map(|j| {
            let lo = j * input;
            let hi = (j + 1) * input;
            let first = lo / output;
            let last = (hi - 1) / output;
            (first..=last)
                .map(|i| {
                    let a = lo.max(i * output);
                    let b = hi.min((i + 1) * output);
                    (i, (b - a) as f64 / input as f64)
                })
                .collect()
        })
        .collect()
}

/// Area-weighted downsampling to an `out_w x out_h` grid of coverage
/// fractions.
pub fn downsample(m: &Mask, out_w: usize, out_h: usize) -> Result<SoftGrid> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidGrid(format!(
            "target dimensions must be positive, got {out_w}x{out_h}"
        )));
    }
    let (w, h) = m.dims();
    if out_w > w || out_h > h {
        return Err(Error::InvalidGrid(format!(
            "cannot downsample {w}x{h} to larger {out_w}x{out_h}"
        )));
    }
    let wx = axis_weights(w, out_w);
    let wy = axis_weights(h, out_h);
    let mut values = Vec::with_capacity(out_w * out_h);
    for row in &wy {
        for col in &wx {
            let mut acc = 0.0;
            for &(y, fy) in row {
                for &(x, fx) in col {
                    if m.get(x, y) {
                        acc += fx * fy;
                    }
                }
            }
            values.push(acc.clamp(0.0, 1.0));
        }
    }
    SoftGrid::new(out_w, out_h, values)
}

/// Nearest-neighbour resampling to `out_w x out_h`, then a strict
/// `value > threshold` test per cell.
pub fn binarize(g: &SoftGrid, threshold: f64, out_w: usize, out_h: usize) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidGrid(format!("threshold {threshold} outside (0, 1)")));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidGrid(format!(
            "target dimensions must be positive, got {out_w}x{out_h}"
        )));
    }
    let (gw, gh) = g.dims();
    Mask::from_fn(out_w, out_h, |x, y| {
        let sx = x * gw / out_w;
        let sy = y * gh / out_h;
        g.get(sx, sy) > threshold
    })
}
