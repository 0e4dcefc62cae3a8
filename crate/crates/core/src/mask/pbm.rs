//! Plain portable bitmap (`P1`) text format.
//!
//! Output is canonical: the `P1` magic, a `width height` line, then one line
//! per row with cells separated by single spaces, each line ending in `\n`.
//! The parser also accepts `#` comments and arbitrary whitespace, as the
//! netpbm format allows.

use crate::error::{Error, Result};
use crate::mask::Mask;

pub fn to_pbm(m: &Mask) -> String {
    let (w, h) = m.dims();
    let mut out = String::with_capacity(16 + 2 * w * h);
    out.push_str(&format!("P1\n{w} {h}\n"));
    for y in 0..h {
        for x in 0..w {
            if x > 0 {
                out.push(' ');
            }
            out.push(if m.get(x, y) { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn from_pbm(text: &str) -> Result<Mask> {
    let mut tokens = text
        .lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.split_whitespace());
    match tokens.next() {
        Some("P1") => {}
        other => return Err(Error::Format(format!("expected P1 magic, found {other:?}"))),
    }
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Format(format!("missing {name}")))?
            .parse()
            .map_err(|_| Error::Format(format!("bad {name}")))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let mut bits = Vec::with_capacity(w * h);
    // P1 allows cells without separating whitespace, so split each token into digits.
    for tok in tokens {
        for c in tok.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(Error::Format(format!("unexpected character {c:?} in raster"))),
            }
        }
    }
    if bits.len() != w * h {
        return Err(Error::Format(format!("raster has {} cells, expected {}", bits.len(), w * h)));
    }
    Mask::new(w, h, bits)
}

/// Renders masks next to each other as `#`/`.` text rows, separated by a gap.
pub fn side_by_side(masks: &[&Mask]) -> String {
    let rows = masks.iter().map(|m| m.height()).max().unwrap_or(0);
    let mut out = String::new();
    for y in 0..rows {
        let line: Vec<String> = masks
            .iter()
            .map(|m| {
                (0..m.width())
                    .map(|x| match y < m.height() && m.get(x, y) {
                        true => '#',
                        false => '.',
                    })
                    .collect()
            })
            .collect();
        out.push_str(line.join("   ").trim_end());
        out.push('\n');
    }
    out
}
