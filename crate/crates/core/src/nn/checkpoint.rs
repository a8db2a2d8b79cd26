//! Model checkpoint format (little-endian):
//!
//! ```text
//! "GSRW"  u32 version  u32 layer_count
//! per layer:
//!     u32 tag           1 dense, 2 complex dense, 3 conv, 4 stride-2 conv
//!     u32 rank, rank x u32 weight shape
//!     f64 weights, f64 bias          (complex: w_re, w_im, b_re, b_im)
//! u32 metadata_len, metadata_len bytes of UTF-8 "key=value\n" lines
//! ```

use std::fs;
use std::path::Path;

use super::{ConvLayer, DenseLayer, Tensor};
use crate::error::{Error, Result};
use crate::grid::ByteReader;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GSRW";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_DENSE: u32 = 1;
const TAG_COMPLEX_DENSE: u32 = 2;
const TAG_CONV: u32 = 3;
const TAG_CONV_STRIDE2: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerRecord {
    Dense(DenseLayer),
    Conv(ConvLayer),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub layers: Vec<LayerRecord>,
    /// Ordered key/value pairs. Keys may not contain `=` or newlines.
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.layers.len() as u32);
        for layer in &self.layers {
            match layer {
                LayerRecord::Dense(d) => {
                    let tag = if d.complex_valued() { TAG_COMPLEX_DENSE } else { TAG_DENSE };
                    put_u32(&mut out, tag);
                    put_shape(&mut out, d.w.shape());
                    put_f64s(&mut out, d.w.data());
                    if let (Some(wi), Some(bi)) = (&d.w_im, &d.b_im) {
                        put_f64s(&mut out, wi.data());
                        put_f64s(&mut out, d.b.data());
                        put_f64s(&mut out, bi.data());
                    } else {
                        put_f64s(&mut out, d.b.data());
                    }
                }
                LayerRecord::Conv(c) => {
                    let tag = if c.stride == 2 { TAG_CONV_STRIDE2 } else { TAG_CONV };
                    put_u32(&mut out, tag);
                    put_shape(&mut out, c.w.shape());
                    put_f64s(&mut out, c.w.data());
                    put_f64s(&mut out, c.b.data());
                }
            }
        }
        let meta: String = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(meta.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: "GSRW",
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        let mut r = ByteReader::new(&bytes[4..]);
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let tag = r.u32()?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::InvalidCheckpoint(format!("weight rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let read = |r: &mut ByteReader, shape: &[usize]| -> Result<Tensor> {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                Tensor::new(shape, data)
            };
            let out_dim = *shape.first().ok_or_else(|| Error::InvalidCheckpoint("empty shape".into()))?;
            let layer = match tag {
                TAG_DENSE => {
                    let w = read(&mut r, &shape)?;
                    LayerRecord::Dense(DenseLayer::new(w, read(&mut r, &[out_dim])?)?)
                }
                TAG_COMPLEX_DENSE => {
                    let w = read(&mut r, &shape)?;
                    let wi = read(&mut r, &shape)?;
                    let b = read(&mut r, &[out_dim])?;
                    let bi = read(&mut r, &[out_dim])?;
                    LayerRecord::Dense(DenseLayer::new_complex(w, wi, b, bi)?)
                }
                TAG_CONV | TAG_CONV_STRIDE2 => {
                    let w = read(&mut r, &shape)?;
                    let b = read(&mut r, &[out_dim])?;
                    let stride = if tag == TAG_CONV { 1 } else { 2 };
                    LayerRecord::Conv(ConvLayer::new(w, b, stride)?)
                }
                other => return Err(Error::InvalidCheckpoint(format!("unknown layer tag {other}"))),
            };
            layers.push(layer);
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|e| Error::InvalidCheckpoint(format!("metadata is not UTF-8: {e}")))?;
        if r.remaining() > 0 {
            return Err(Error::TrailingBytes(r.remaining()));
        }
        let metadata = meta
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::InvalidCheckpoint(format!("bad metadata line {line:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_shape(out: &mut Vec<u8>, shape: &[usize]) {
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
