//! Versioned binary codebook file.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                             |
//! |--------|------|---------------------------------------------------|
//! | 0      | 4    | magic `MTCB`                                      |
//! | 4      | 4    | format version (`u32`, currently 1)               |
//! | 8      | 1    | scheme: 0 VQ, 1 FSQ, 2 RQ, 3 identity             |
//! | 9      | 1    | shared-codebook flag (0 or 1)                     |
//! | 10     | 4    | `K`, entries per codebook (`u32`)                 |
//! | 14     | 4    | `d`, vector dimension (`u32`)                     |
//! | 18     | 4    | `S`, quantization steps (`u32`)                   |
//! | 22     | 4    | `B`, stored codebooks (`u32`; 1 if shared, else S; 0 for FSQ/identity) |
//! | 26     | …    | `B·K·d` code vectors as `f32`, book by book, entry by entry |
//! | …      | …    | per book: `K` EMA counts (`f64`), `K·d` EMA sums (`f64`), `K` staleness counters (`u32`) |

use std::io::{Read, Write};

use crate::binio::*;
use crate::error::{Error, Result};
use crate::quant::{Codebook, CodebookSet, Scheme};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"MTCB";
pub const CODEBOOK_VERSION: u32 = 1;

const MAX_ENTRIES: u64 = 1 << 28;

fn scheme_tag(s: Scheme) -> u8 {
    match s {
        Scheme::Vq => 0,
        Scheme::Fsq => 1,
        Scheme::Rq => 2,
        Scheme::Identity => 3,
    }
}

fn scheme_from_tag(t: u8) -> Result<Scheme> {
    Ok(match t {
        0 => Scheme::Vq,
        1 => Scheme::Fsq,
        2 => Scheme::Rq,
        3 => Scheme::Identity,
        other => return Err(Error::Format(format!("unknown scheme tag {other}"))),
    })
}

pub fn write_codebooks(w: &mut impl Write, set: &CodebookSet) -> Result<()> {
    w.write_all(CODEBOOK_MAGIC)?;
    put_u32(w, CODEBOOK_VERSION)?;
    put_u8(w, scheme_tag(set.scheme))?;
    put_u8(w, set.shared as u8)?;
    put_usize32(w, set.codebook_size, "codebook size")?;
    put_usize32(w, set.dim, "dimension")?;
    put_usize32(w, set.steps, "steps")?;
    put_usize32(w, set.books.len(), "book count")?;
    for book in &set.books {
        if book.size() != set.codebook_size || book.dim() != set.dim {
            return Err(Error::Format("codebook shape disagrees with set header".into()));
        }
        put_f32s(w, book.vectors().flatten().copied())?;
    }
    for book in &set.books {
        put_f64s(w, book.ema_counts().iter().copied())?;
        put_f64s(w, (0..book.size()).flat_map(|k| book.ema_sum(k).iter().copied()))?;
        for &s in book.staleness() {
            put_u32(w, s)?;
        }
    }
    Ok(())
}

pub fn read_codebooks(r: &mut impl Read) -> Result<CodebookSet> {
    expect_magic(r, CODEBOOK_MAGIC, "codebook")?;
    let version = get_u32(r)?;
    if version != CODEBOOK_VERSION {
        return Err(Error::Version {
            what: "codebook",
            found: version,
            expected: CODEBOOK_VERSION,
        });
    }
    let scheme = scheme_from_tag(get_u8(r)?)?;
    let shared = match get_u8(r)? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad shared flag {other}"))),
    };
    let size = get_u32(r)? as usize;
    let dim = get_u32(r)? as usize;
    let steps = get_u32(r)? as usize;
    let n_books = get_u32(r)? as usize;
    bounded((size as u64) * (dim as u64) * (n_books as u64), MAX_ENTRIES, "codebook entries")?;
    if n_books > 0 && (size == 0 || dim == 0) {
        return Err(Error::Format("stored codebooks must have positive size and dimension".into()));
    }

    let vectors = (0..n_books)
        .map(|_| get_f32s(r, size * dim))
        .collect::<Result<Vec<_>>>()?;
    let mut books = Vec::with_capacity(n_books);
    for v in vectors {
        let counts = get_f64s(r, size)?;
        let sums = get_f64s(r, size * dim)?;
        let stale = (0..size).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        books.push(Codebook::from_raw(dim, size, v, counts, sums, stale));
    }
    Ok(CodebookSet {
        scheme,
        codebook_size: size,
        dim,
        steps,
        shared,
        books,
    })
}
