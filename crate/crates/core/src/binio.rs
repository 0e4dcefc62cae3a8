//! Little-endian primitives shared by the codebook and checkpoint formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn put_u8(w: &mut impl Write, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f32s(w: &mut impl Write, vs: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vs {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn put_f64s(w: &mut impl Write, vs: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn put_usize32(w: &mut impl Write, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))?;
    put_u32(w, v)
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("unexpected end of file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub(crate) fn get_u8(r: &mut impl Read) -> Result<u8> {
    Ok(take::<1>(r)?[0])
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

pub(crate) fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(take(r)?))
}

pub(crate) fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(take(r)?) as f64)).collect()
}

pub(crate) fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f64::from_le_bytes(take(r)?))).collect()
}

pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], what: &str) -> Result<()> {
    let found = take::<4>(r)?;
    if &found != magic {
        return Err(Error::Format(format!("not a {what} file (magic {found:?})")));
    }
    Ok(())
}

/// Guards allocations driven by header fields of untrusted files.
pub(crate) fn bounded(n: u64, limit: u64, what: &str) -> Result<usize> {
    if n > limit {
        return Err(Error::Format(format!("{what} {n} exceeds limit {limit}")));
    }
    Ok(n as usize)
}
