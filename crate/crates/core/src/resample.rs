//! Classical resampling: Catmull-Rom bicubic upscaling and box-average
//! downsampling.
//!
//! Output pixel centres sit at `(i + 0.5) / factor - 0.5` in input pixel
//! coordinates, so a factor-`f` upscale of an `h x w` field is exactly
//! `(f*h) x (f*w)` with no half-pixel drift. Out-of-range taps are clamped to
//! the nearest edge sample.

use crate::error::{Error, Result};
use crate::grid::GridField;

/// Integer scale factor between low- and high-resolution grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResampleFactor(usize);

impl ResampleFactor {
    pub const ONE: Self = Self(1);
    pub const TWO: Self = Self(2);
    pub const FOUR: Self = Self(4);

    pub fn new(factor: usize) -> Result<Self> {
        match factor {
            1 | 2 | 4 => Ok(Self(factor)),
            other => Err(Error::UnsupportedFactor(other)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for ResampleFactor {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        Self::new(value)
    }
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
#[inline]
pub fn catmull_rom_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Interpolates a 1-D sequence at fractional position `pos` (in sample units),
/// clamping taps at both ends.
pub fn interpolate_1d(samples: &[f64], pos: f64) -> f64 {
    let (base, weights) = taps(pos);
    let last = samples.len() as isize - 1;
    weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * samples[(base + k as isize - 1).clamp(0, last) as usize])
        .sum()
}

/// Index of the first tap's right neighbour and the four tap weights.
#[inline]
fn taps(pos: f64) -> (isize, [f64; 4]) {
    let base = pos.floor();
    let t = pos - base;
    (
        base as isize,
        [
            catmull_rom_weight(t + 1.0),
            catmull_rom_weight(t),
            catmull_rom_weight(1.0 - t),
            catmull_rom_weight(2.0 - t),
        ],
    )
}

/// Source position of output sample `i` for a given factor.
#[inline]
pub fn source_position(i: usize, factor: usize) -> f64 {
    (i as f64 + 0.5) / factor as f64 - 0.5
}

/// Precomputed clamped tap indices and weights for one axis.
fn axis_plan(len_in: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = len_in as isize - 1;
    (0..len_in * factor)
        .map(|i| {
            let (base, weights) = taps(source_position(i, factor));
            let mut idx = [0usize; 4];
            for (k, slot) in idx.iter_mut().enumerate() {
                *slot = (base + k as isize - 1).clamp(0, last) as usize;
            }
            (idx, weights)
        })
        .collect()
}

/// Bicubic upscale, rows first then columns.
pub fn bicubic_upscale(field: &GridField, factor: ResampleFactor) -> Result<GridField> {
    let f = factor.get();
    if f == 1 {
        return Ok(field.clone());
    }
    let (h, w) = field.dims();
    let (ho, wo) = (h * f, w * f);
    let cols = axis_plan(w, f);
    let rows = axis_plan(h, f);
    let src = field.values();

    // Horizontal pass: h x wo.
    let mut horiz = vec![0.0; h * wo];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        let out = &mut horiz[r * wo..(r + 1) * wo];
        for (o, (idx, wt)) in out.iter_mut().zip(&cols) {
            *o = wt[0] * line[idx[0]]
                + wt[1] * line[idx[1]]
                + wt[2] * line[idx[2]]
                + wt[3] * line[idx[3]];
        }
    }

    // Vertical pass: ho x wo.
    let mut values = vec![0.0; ho * wo];
    for (r, (idx, wt)) in rows.iter().enumerate() {
        let out = &mut values[r * wo..(r + 1) * wo];
        let l0 = &horiz[idx[0] * wo..(idx[0] + 1) * wo];
        let l1 = &horiz[idx[1] * wo..(idx[1] + 1) * wo];
        let l2 = &horiz[idx[2] * wo..(idx[2] + 1) * wo];
        let l3 = &horiz[idx[3] * wo..(idx[3] + 1) * wo];
        for c in 0..wo {
            out[c] = wt[0] * l0[c] + wt[1] * l1[c] + wt[2] * l2[c] + wt[3] * l3[c];
        }
    }
    field.derive(ho, wo, values)
}

/// Mean over non-overlapping `factor x factor` blocks.
pub fn box_downsample(field: &GridField, factor: ResampleFactor) -> Result<GridField> {
    let f = factor.get();
    let (h, w) = field.dims();
    if h % f != 0 || w % f != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            factor: f,
        });
    }
    if f == 1 {
        return Ok(field.clone());
    }
    let (ho, wo) = (h / f, w / f);
    let norm = (f * f) as f64;
    let mut values = vec![0.0; ho * wo];
    for (r, row) in values.chunks_mut(wo).enumerate() {
        for (c, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for dr in 0..f {
                for dc in 0..f {
                    acc += field.get(r * f + dr, c * f + dc);
                }
            }
            *out = acc / norm;
        }
    }
    field.derive(ho, wo, values)
}
