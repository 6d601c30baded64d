//! Binary checkpoints.
//!
//! Layout, all little-endian: magic `THEPOSE-CKPT`, version `u32`, parameter
//! count `u32`, then per parameter in name order: name length `u32`, UTF-8
//! name, rank `u32`, dims `u32 x rank`, values `f64`. An optimizer block
//! follows: Adam step count `u64`, then first and second moments of every
//! parameter, in the same order.

use std::fs;
use std::path::Path;

use thepose_core::tensor::{ParamStore, Tensor};

use crate::binio::{LeReader, LeWriter, ReadError};
use crate::error::{CliError, FormatError, Result};

pub const CKPT_MAGIC: &[u8; 12] = b"THEPOSE-CKPT";
pub const CKPT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut w = LeWriter::new(&mut buf);
    w.bytes(CKPT_MAGIC)?;
    w.u32(CKPT_VERSION)?;
    w.len32(store.len())?;
    for (name, t) in store.iter() {
        w.len32(name.len())?;
        w.bytes(name.as_bytes())?;
        w.len32(t.shape().len())?;
        for &d in t.shape() {
            w.len32(d)?;
        }
        w.f64s(t.data())?;
    }
    w.u64(store.steps_taken())?;
    for name in store.names() {
        let p = store.param(name).expect("listed name");
        w.f64s(&p.first_moment)?;
        w.f64s(&p.second_moment)?;
    }
    w.finish()?;
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<ParamStore, FormatError> {
    let inner = || -> std::result::Result<ParamStore, ReadError> {
        let mut r = LeReader::new(bytes);
        r.header(CKPT_MAGIC, CKPT_VERSION)?;
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        let mut names = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.bytes(len)?)
                .map_err(|_| FormatError::Invalid("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let n = shape.iter().product();
            let data = r.f64s(n)?;
            let t = Tensor::new(shape, data).map_err(|e| FormatError::Invalid(e.to_string()))?;
            if store.get(&name).is_some() {
                return Err(FormatError::Invalid(format!("duplicate parameter {name}")).into());
            }
            store.insert(&name, t);
            names.push(name);
        }
        store.set_steps_taken(r.u64()?);
        for name in &names {
            let n = store.get(name).expect("inserted").len();
            let first = r.f64s(n)?;
            let second = r.f64s(n)?;
            store.set_moments(name, first, second).map_err(|e| FormatError::Invalid(e.to_string()))?;
        }
        r.expect_end()?;
        Ok(store)
    };
    inner().map_err(|e| match e {
        ReadError::Format(f) => f,
        ReadError::Io(io) => FormatError::Invalid(io.to_string()),
    })
}

pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<()> {
    let bytes = encode_checkpoint(store).map_err(|e| CliError::io(path, e))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|source| CliError::Format { path: path.to_path_buf(), source })
}

/// Checks that `store` has exactly the parameters and shapes of `reference`.
pub fn ensure_compatible(store: &ParamStore, reference: &ParamStore) -> Result<()> {
    let names: Vec<&str> = store.names().collect();
    let expected: Vec<&str> = reference.names().collect();
    if names != expected {
        return Err(CliError::Config("checkpoint parameters do not match the configured model".into()));
    }
    for (name, t) in store.iter() {
        let want = reference.get(name).expect("same names");
        if t.shape() != want.shape() {
            return Err(CliError::Config(format!(
                "checkpoint parameter {name} has shape {:?}, model expects {:?}",
                t.shape(),
                want.shape()
            )));
        }
    }
    Ok(())
}
