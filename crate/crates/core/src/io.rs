//! Versioned binary model files.
//!
//! Layout (little-endian): magic `KDSM`, `u32` version, `u32` length plus
//! UTF-8 config hash, `u64` seed, `u32` input dim, `u32` hidden count, one
//! `u32` per hidden width, `u32` class count, then per layer `u32` rows,
//! `u32` cols, row-major `f64` weights and `f64` biases.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{KdError, Result};
use crate::nn::{ArchSpec, Model};

pub const MAGIC: &[u8; 4] = b"KDSM";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_model(model: &Model, config_hash: &str) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + model.num_params() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut buf, config_hash.len());
    buf.extend_from_slice(config_hash.as_bytes());
    buf.extend_from_slice(&model.seed.to_le_bytes());
    put_u32(&mut buf, model.arch.input_dim);
    put_u32(&mut buf, model.arch.hidden_layers.len());
    for &h in &model.arch.hidden_layers {
        put_u32(&mut buf, h);
    }
    put_u32(&mut buf, model.arch.num_classes);
    for (w, b) in model.weights.iter().zip(&model.biases) {
        put_u32(&mut buf, w.nrows());
        put_u32(&mut buf, w.ncols());
        for x in w.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for x in b.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<(Model, String), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("not a model file (bad magic)".into());
    }
    let version = c.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported model format version {version}"));
    }
    let hash_len = c.u32()?;
    let hash = String::from_utf8(c.take(hash_len)?.to_vec()).map_err(|_| "config hash is not UTF-8")?;
    let seed = c.u64()?;
    let input_dim = c.u32()?;
    let hidden_count = c.u32()?;
    let hidden = (0..hidden_count).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    let classes = c.u32()?;
    let arch = ArchSpec::new(input_dim, hidden, classes);
    arch.validate().map_err(|e| e.to_string())?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, (fan_in, fan_out)) in arch.layer_dims().into_iter().enumerate() {
        let (rows, cols) = (c.u32()?, c.u32()?);
        if (rows, cols) != (fan_in, fan_out) {
            return Err(format!("layer {l} is {rows}x{cols}, architecture implies {fan_in}x{fan_out}"));
        }
        let w = Array2::from_shape_vec((rows, cols), c.f64s(rows * cols)?).map_err(|e| e.to_string())?;
        weights.push(w);
        biases.push(Array1::from(c.f64s(cols)?));
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let model = Model::from_parts(arch, weights, biases, seed).map_err(|e| e.to_string())?;
    Ok((model, hash))
}

/// Decode a model and the config hash stored alongside it.
pub fn decode_model(bytes: &[u8]) -> Result<(Model, String)> {
    decode_inner(bytes).map_err(KdError::Config)
}

pub fn save_model(path: &Path, model: &Model, config_hash: &str) -> Result<()> {
    fs::write(path, encode_model(model, config_hash)).map_err(|e| KdError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(Model, String)> {
    let bytes = fs::read(path).map_err(|e| KdError::io(path, e))?;
    decode_inner(&bytes).map_err(|m| KdError::format(path, m))
}
