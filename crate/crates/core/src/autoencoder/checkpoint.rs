//! Versioned training checkpoint.
//!
//! Little-endian throughout.
//!
//! | field                | encoding                                             |
//! |----------------------|------------------------------------------------------|
//! | magic                | `MTCK`                                               |
//! | version              | `u32`, currently 1                                   |
//! | config               | `u32` byte length, then the `TrainConfig` as JSON    |
//! | step                 | `u64` completed training steps                       |
//! | adam step            | `u64`                                                |
//! | tensor count `T`     | `u32`                                                |
//! | tensors              | `T` × (`u8` name length, name, `u32` rows, `u32` cols, rows·cols `f64`) |
//! | adam first moments   | `T` × rows·cols `f64`, same order                    |
//! | adam second moments  | `T` × rows·cols `f64`, same order                    |
//! | rng                  | 32-byte seed, `u64` stream, `u64` low and `u64` high word position |
//! | codebooks            | `u64` byte length, then a complete codebook file     |
//!
//! Loading a checkpoint restores a [`Trainer`] that continues exactly where
//! the saved one stopped.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::*;
use crate::error::{Error, Result};
use crate::quant::{read_codebooks, write_codebooks};

use super::{Adam, Model, NetParams, TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_CONFIG_BYTES: u64 = 1 << 20;
const MAX_TENSOR_VALUES: u64 = 1 << 28;
const MAX_CODEBOOK_BYTES: u64 = 1 << 32;

pub fn write_checkpoint(w: &mut impl Write, t: &Trainer) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    let config = serde_json::to_vec(&t.model.config)?;
    put_usize32(w, config.len(), "config length")?;
    w.write_all(&config)?;
    put_u64(w, t.step)?;
    put_u64(w, t.adam.t)?;

    let tensors = t.model.params.tensors();
    put_usize32(w, tensors.len(), "tensor count")?;
    for (name, (rows, cols), values) in &tensors {
        put_u8(w, name.len() as u8)?;
        w.write_all(name.as_bytes())?;
        put_usize32(w, *rows, "rows")?;
        put_usize32(w, *cols, "cols")?;
        put_f64s(w, values.iter().copied())?;
    }
    for moments in [&t.adam.m, &t.adam.v] {
        for (_, _, values) in moments.tensors() {
            put_f64s(w, values.iter().copied())?;
        }
    }

    w.write_all(&t.rng.get_seed())?;
    put_u64(w, t.rng.get_stream())?;
    let pos = t.rng.get_word_pos();
    put_u64(w, pos as u64)?;
    put_u64(w, (pos >> 64) as u64)?;

    let mut books = Vec::new();
    write_codebooks(&mut books, &t.model.codebooks)?;
    put_u64(w, books.len() as u64)?;
    w.write_all(&books)?;
    Ok(())
}

fn read_values(r: &mut impl Read, into: &mut NetParams) -> Result<()> {
    for (_, values) in into.tensors_mut() {
        let got = get_f64s(r, values.len())?;
        values.copy_from_slice(&got);
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Trainer> {
    expect_magic(r, CHECKPOINT_MAGIC, "checkpoint")?;
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = bounded(get_u32(r)? as u64, MAX_CONFIG_BYTES, "config length")?;
    let mut config = vec![0u8; len];
    r.read_exact(&mut config)?;
    let config: TrainConfig = serde_json::from_slice(&config)?;
    config.validate()?;
    let step = get_u64(r)?;
    let adam_t = get_u64(r)?;

    // Shapes come from the config; the stored headers must agree with them.
    let mut model = Model::init(config)?;
    let expected: Vec<(&'static str, (usize, usize))> =
        model.params.tensors().iter().map(|(n, s, _)| (*n, *s)).collect();
    let count = get_u32(r)? as usize;
    if count != expected.len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut params = model.params.zeros_like();
    for ((name, shape), (_, values)) in expected.iter().zip(params.tensors_mut()) {
        let n = get_u8(r)? as usize;
        let mut found = vec![0u8; n];
        r.read_exact(&mut found)?;
        let rows = get_u32(r)? as usize;
        let cols = get_u32(r)? as usize;
        if found != name.as_bytes() || (rows, cols) != *shape {
            return Err(Error::Format(format!(
                "tensor {} {rows}x{cols} does not match {name} {}x{}",
                String::from_utf8_lossy(&found),
                shape.0,
                shape.1
            )));
        }
        bounded((rows * cols) as u64, MAX_TENSOR_VALUES, "tensor size")?;
        values.copy_from_slice(&get_f64s(r, rows * cols)?);
    }
    let c = &model.config;
    let mut adam = Adam::new(&params, c.learning_rate, c.beta1, c.beta2, c.adam_eps);
    adam.t = adam_t;
    read_values(r, &mut adam.m)?;
    read_values(r, &mut adam.v)?;

    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(get_u64(r)?);
    let lo = get_u64(r)? as u128;
    let hi = get_u64(r)? as u128;
    rng.set_word_pos(lo | (hi << 64));

    let n = bounded(get_u64(r)?, MAX_CODEBOOK_BYTES, "codebook length")?;
    let mut books = vec![0u8; n];
    r.read_exact(&mut books)?;
    let codebooks = read_codebooks(&mut books.as_slice())?;
    if codebooks.scheme != model.config.quant.scheme || codebooks.books.len() != model.codebooks.books.len() {
        return Err(Error::Format("embedded codebooks do not match the config".into()));
    }

    model.params = params;
    model.codebooks = codebooks;
    Ok(Trainer {
        model,
        adam,
        rng,
        step,
    })
}

pub fn save_checkpoint(path: &std::path::Path, t: &Trainer) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<Trainer> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r)
}
