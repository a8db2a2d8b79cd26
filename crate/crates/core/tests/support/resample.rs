//! Resampling by brute-force kernel sums.

use gridsr::GridField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Keys cubic convolution kernel with a = -1/2.
pub fn keys(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Sums the separable kernel over every source pixel (plus a clamped border
/// wide enough for the support), with no tap bookkeeping at all.
pub fn oracle_bicubic(f: &GridField, factor: usize) -> GridField {
    let (h, w) = f.dims();
    GridField::from_fn(h * factor, w * factor, |i, j| {
        let sy = (i as f64 + 0.5) / factor as f64 - 0.5;
        let sx = (j as f64 + 0.5) / factor as f64 - 0.5;
        let mut acc = 0.0;
        for p in -4..h as isize + 4 {
            let wy = keys(sy - p as f64);
            if wy == 0.0 {
                continue;
            }
            for q in -4..w as isize + 4 {
                let wx = keys(sx - q as f64);
                if wx != 0.0 {
                    acc += wy * wx * f.get_clamped(p, q);
                }
            }
        }
        acc
    })
    .unwrap()
}

pub fn random_field(seed: u64, h: usize, w: usize) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridField::new(h, w, (0..h * w).map(|_| rng.gen_range(-2.0..3.0)).collect()).unwrap()
}
