//! The gridded field type, its on-disk format and heatmap rendering.
//!
//! A [`GridField`] is a single-channel 2-D field on a regular latitude/longitude
//! grid. Values are held as `f64` in memory and stored as little-endian `f32`
//! on disk:
//!
//! ```text
//! bytes 0..4    magic "GSR1"
//! u32           height
//! u32           width
//! u32           name_len
//! name_len      UTF-8 name block
//! h*w * f32     values, row-major, row 0 = northernmost latitude
//! ```
//!
//! The name block holds the variable name, optionally followed by
//! U+001F (unit separator) and the units label.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"GSR1";
const UNIT_SEPARATOR: char = '\u{1f}';
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    height: usize,
    width: usize,
    values: Vec<f64>,
    pub var_name: String,
    pub units: String,
}

impl GridField {
    /// Builds a field, checking the length and finiteness invariants.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidField(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::InvalidField(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            values,
            var_name: String::new(),
            units: String::new(),
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(height, width, values)
    }

    pub fn with_labels(mut self, var_name: impl Into<String>, units: impl Into<String>) -> Self {
        self.var_name = var_name.into();
        self.units = units.into();
        self
    }

    /// Same labels, new values. Used by operations that change the data but
    /// not what the data represents.
    pub(crate) fn derive(&self, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(height, width, values)?;
        out.var_name.clone_from(&self.var_name);
        out.units.clone_from(&self.units);
        Ok(out)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Value at a possibly out-of-range index, clamped to the nearest edge.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.values[r * self.width + c]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn ensure_same_dims(&self, other: &GridField) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Encodes the field in the GSR1 format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let name = if self.units.is_empty() {
            self.var_name.clone()
        } else {
            format!("{}{UNIT_SEPARATOR}{}", self.var_name, self.units)
        };
        let mut out = Vec::with_capacity(HEADER_LEN + name.len() + 4 * self.values.len());
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Decodes a GSR1 byte buffer.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != GRID_MAGIC {
            return Err(Error::BadMagic {
                expected: "GSR1",
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        let mut reader = ByteReader::new(&bytes[4..]);
        let height = reader.u32()? as usize;
        let width = reader.u32()? as usize;
        let name_len = reader.u32()? as usize;
        let name = std::str::from_utf8(reader.take(name_len)?)
            .map_err(|e| Error::InvalidField(format!("variable name is not UTF-8: {e}")))?;
        let count = height
            .checked_mul(width)
            .ok_or_else(|| Error::InvalidField("dimensions overflow".into()))?;
        let payload = reader.take(count.saturating_mul(4))?;
        if reader.remaining() > 0 {
            return Err(Error::TrailingBytes(reader.remaining()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let (var_name, units) = match name.split_once(UNIT_SEPARATOR) {
            Some((n, u)) => (n, u),
            None => (name, ""),
        };
        Ok(Self::new(height, width, values)?.with_labels(var_name, units))
    }
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<GridField> {
    GridField::from_bytes(&fs::read(path)?)
}

pub fn save_grid(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, field.to_bytes())?;
    Ok(())
}

/// Min/max bounds used to map fields onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub min_val: f64,
    pub max_val: f64,
}

impl NormStats {
    pub fn new(min_val: f64, max_val: f64) -> Result<Self> {
        let stats = Self { min_val, max_val };
        stats.validate()?;
        Ok(stats)
    }

    /// Bounds over every value of every field given.
    pub fn from_fields<'a>(fields: impl IntoIterator<Item = &'a GridField>) -> Result<Self> {
        let (lo, hi) = fields
            .into_iter()
            .map(GridField::min_max)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            });
        Self::new(lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_val.is_finite() && self.max_val.is_finite() && self.min_val < self.max_val {
            Ok(())
        } else {
            Err(Error::DegenerateStats {
                min: self.min_val,
                max: self.max_val,
            })
        }
    }

    pub fn range(&self) -> f64 {
        self.max_val - self.min_val
    }
}

pub fn normalize(field: &GridField, stats: &NormStats) -> Result<GridField> {
    stats.validate()?;
    let range = stats.range();
    let values = field
        .values()
        .iter()
        .map(|v| (v - stats.min_val) / range)
        .collect();
    field.derive(field.height(), field.width(), values)
}

pub fn denormalize(field: &GridField, stats: &NormStats) -> Result<GridField> {
    stats.validate()?;
    let range = stats.range();
    let values = field
        .values()
        .iter()
        .map(|v| v * range + stats.min_val)
        .collect();
    field.derive(field.height(), field.width(), values)
}

/// 8-bit grayscale pixels for a field, min-max scaled. Constant fields are
/// mid-gray.
pub fn heatmap_pixels(field: &GridField) -> Vec<u8> {
    let (lo, hi) = field.min_max();
    if hi <= lo {
        return vec![128; field.len()];
    }
    let scale = 255.0 / (hi - lo);
    field
        .values()
        .iter()
        .map(|v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Writes the field as a binary PGM (`P5`) image.
pub fn render_heatmap(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(field.len() + 32);
    write!(out, "P5\n{} {}\n255\n", field.width(), field.height())?;
    out.extend_from_slice(&heatmap_pixels(field));
    fs::write(path, out)?;
    Ok(())
}

/// Little-endian cursor over a byte slice that reports truncation.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}
