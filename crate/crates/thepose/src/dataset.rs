//! Binary dataset files.
//!
//! Layout, all little-endian: magic `THEPOSE-DATA`, version `u32`, sample
//! count `u32`, then per sample
//!
//! - category id `u8`, height and width `u16`, intrinsics `fx fy cx cy` as `f64`
//! - mask bitset, row-major, least significant bit first
//! - depth `f32` and prior embedding `f32 x E` for the masked pixels only, in
//!   row-major order; pixels outside the mask are zero on load
//! - point count `u32`, then points `f32 x 3`, source pixels `u32` and point
//!   embeddings `f32 x E`
//! - ground truth rotation (9, row-major), translation (3), size (3) as `f64`
//! - scene seed `u64`

use std::fs;
use std::path::Path;

use thepose_core::geometry::{check_rotation, Intrinsics, PointCloud, Pose};
use thepose_core::synth::{Category, SceneSample, EMBEDDING_DIM};

use crate::binio::{LeReader, LeWriter, ReadError};
use crate::error::{CliError, FormatError, Result};

pub const DATA_MAGIC: &[u8; 12] = b"THEPOSE-DATA";
pub const DATA_VERSION: u32 = 1;

fn invalid(msg: impl Into<String>) -> ReadError {
    ReadError::Format(FormatError::Invalid(msg.into()))
}

fn write_sample(w: &mut LeWriter<&mut Vec<u8>>, s: &SceneSample) -> std::io::Result<()> {
    let (h, wd) = (s.height(), s.width());
    let too_big = |_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "image side exceeds u16");
    w.u8(s.category.id())?;
    w.u16(u16::try_from(h).map_err(too_big)?)?;
    w.u16(u16::try_from(wd).map_err(too_big)?)?;
    let k = &s.intrinsics;
    w.f64s(&[k.fx, k.fy, k.cx, k.cy])?;
    let mut bits = vec![0u8; (h * wd).div_ceil(8)];
    for (i, _) in s.mask.iter().enumerate().filter(|(_, m)| **m) {
        bits[i / 8] |= 1 << (i % 8);
    }
    w.bytes(&bits)?;
    let masked = s.masked_pixels();
    for &p in &masked {
        w.f32(s.depth[p])?;
    }
    for &p in &masked {
        for c in 0..EMBEDDING_DIM {
            w.f32(s.prior[p * EMBEDDING_DIM + c])?;
        }
    }
    w.len32(s.cloud.len())?;
    for p in s.cloud.points() {
        for v in p {
            w.f32(*v as f32)?;
        }
    }
    for &p in &s.pixel_indices {
        w.len32(p)?;
    }
    for &p in &s.pixel_indices {
        for c in 0..EMBEDDING_DIM {
            w.f32(s.prior[p * EMBEDDING_DIM + c])?;
        }
    }
    for row in &s.gt.rotation {
        w.f64s(row)?;
    }
    w.f64s(&s.gt.translation)?;
    w.f64s(&s.gt.size)?;
    w.u64(s.seed)
}

/// Serialized bytes of `samples`.
pub fn encode_dataset(samples: &[SceneSample]) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut w = LeWriter::new(&mut buf);
    w.bytes(DATA_MAGIC)?;
    w.u32(DATA_VERSION)?;
    w.len32(samples.len())?;
    for s in samples {
        write_sample(&mut w, s)?;
    }
    w.finish()?;
    Ok(buf)
}

fn read_sample(r: &mut LeReader<&[u8]>) -> std::result::Result<SceneSample, ReadError> {
    let id = r.u8()?;
    let category = Category::from_id(id).ok_or_else(|| invalid(format!("unknown category id {id}")))?;
    let height = r.u16()? as usize;
    let width = r.u16()? as usize;
    let (fx, fy, cx, cy) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let intrinsics =
        Intrinsics::new(fx, fy, cx, cy, width, height).map_err(|e| invalid(format!("intrinsics: {e}")))?;
    let n_pixels = width * height;
    let bits = r.bytes(n_pixels.div_ceil(8))?;
    let mask: Vec<bool> = (0..n_pixels).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
    let masked: Vec<usize> = (0..n_pixels).filter(|&i| mask[i]).collect();
    let mut depth = vec![0.0f32; n_pixels];
    for &p in &masked {
        depth[p] = r.f32()?;
    }
    let mut prior = vec![0.0f32; n_pixels * EMBEDDING_DIM];
    for &p in &masked {
        for c in 0..EMBEDDING_DIM {
            prior[p * EMBEDDING_DIM + c] = r.f32()?;
        }
    }
    let n = r.u32()? as usize;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push([f64::from(r.f32()?), f64::from(r.f32()?), f64::from(r.f32()?)]);
    }
    let mut pixel_indices = Vec::with_capacity(n);
    for _ in 0..n {
        let p = r.u32()? as usize;
        if p >= n_pixels || !mask[p] {
            return Err(invalid(format!("point source pixel {p} is outside the mask")));
        }
        pixel_indices.push(p);
    }
    for &p in &pixel_indices {
        for c in 0..EMBEDDING_DIM {
            if r.f32()?.to_bits() != prior[p * EMBEDDING_DIM + c].to_bits() {
                return Err(invalid(format!("point embedding disagrees with the prior map at pixel {p}")));
            }
        }
    }
    let cloud = PointCloud::new(points).map_err(|e| invalid(format!("cloud: {e}")))?;
    let mut rotation = [[0.0; 3]; 3];
    for row in rotation.iter_mut() {
        for v in row.iter_mut() {
            *v = r.f64()?;
        }
    }
    check_rotation(&rotation).map_err(|e| invalid(format!("ground truth rotation: {e}")))?;
    let translation = [r.f64()?, r.f64()?, r.f64()?];
    let size = [r.f64()?, r.f64()?, r.f64()?];
    let seed = r.u64()?;
    Ok(SceneSample {
        category,
        intrinsics,
        mask,
        depth,
        prior,
        cloud,
        pixel_indices,
        gt: Pose { rotation, translation, size },
        seed,
    })
}

/// Parses dataset bytes; rejects trailing data.
pub fn decode_dataset(bytes: &[u8]) -> std::result::Result<Vec<SceneSample>, FormatError> {
    let inner = || -> std::result::Result<Vec<SceneSample>, ReadError> {
        let mut r = LeReader::new(bytes);
        r.header(DATA_MAGIC, DATA_VERSION)?;
        let count = r.u32()? as usize;
        let mut samples = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            samples.push(read_sample(&mut r)?);
        }
        r.expect_end()?;
        Ok(samples)
    };
    inner().map_err(|e| match e {
        ReadError::Format(f) => f,
        ReadError::Io(io) => FormatError::Invalid(io.to_string()),
    })
}

pub fn save_dataset(path: &Path, samples: &[SceneSample]) -> Result<()> {
    let bytes = encode_dataset(samples).map_err(|e| CliError::io(path, e))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Vec<SceneSample>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_dataset(&bytes).map_err(|source| CliError::Format { path: path.to_path_buf(), source })
}
