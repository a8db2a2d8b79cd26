//! Metrics written straight from the textbook definitions.

use gridsr::GridField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_unit_field(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GridField {
    GridField::new(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

pub fn pairs(n: usize) -> Vec<(GridField, GridField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    (0..n)
        .map(|_| {
            let a = random_unit_field(&mut rng, 16, 16);
            // Correlated partner so SSIM is not trivially near zero.
            let noise = random_unit_field(&mut rng, 16, 16);
            let mix: f64 = rng.gen();
            let b = GridField::new(
                16,
                16,
                a.values()
                    .iter()
                    .zip(noise.values())
                    .map(|(x, y)| mix * x + (1.0 - mix) * y)
                    .collect(),
            )
            .unwrap();
            (a, b)
        })
        .collect()
}

pub fn oracle_mse(a: &GridField, b: &GridField) -> f64 {
    let mut s = 0.0;
    for i in 0..a.height() {
        for j in 0..a.width() {
            let d = a.get(i, j) - b.get(i, j);
            s += d * d;
        }
    }
    s / (a.height() * a.width()) as f64
}

pub fn oracle_mae(a: &GridField, b: &GridField) -> f64 {
    let mut s = 0.0;
    for i in 0..a.height() {
        for j in 0..a.width() {
            s += (a.get(i, j) - b.get(i, j)).abs();
        }
    }
    s / (a.height() * a.width()) as f64
}

pub fn oracle_sobel_magnitude(f: &GridField) -> Vec<f64> {
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut out = Vec::new();
    for i in 0..f.height() as isize {
        for j in 0..f.width() as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for di in 0..3 {
                for dj in 0..3 {
                    let v = f.get_clamped(i + di as isize - 1, j + dj as isize - 1);
                    gx += kx[di][dj] * v;
                    gy += ky[di][dj] * v;
                }
            }
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

pub fn oracle_edge(a: &GridField, b: &GridField) -> f64 {
    let (ma, mb) = (oracle_sobel_magnitude(a), oracle_sobel_magnitude(b));
    ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum::<f64>() / ma.len() as f64
}

pub fn oracle_psnr(a: &GridField, b: &GridField, peak: f64) -> f64 {
    10.0 * (peak * peak / oracle_mse(a, b)).log10()
}

/// Per-window SSIM with an 11x11 Gaussian (sigma 1.5) built in 2-D and
/// two-pass moments.
pub fn oracle_ssim(a: &GridField, b: &GridField, peak: f64) -> f64 {
    let n = 11usize;
    let mut kernel = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (k, row) in kernel.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (k as f64 - 5.0, l as f64 - 5.0);
            *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    kernel.iter_mut().flatten().for_each(|v| *v /= total);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..=a.height() - n {
        for j in 0..=a.width() - n {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            for k in 0..n {
                for l in 0..n {
                    mu_a += kernel[k][l] * a.get(i + k, j + l);
                    mu_b += kernel[k][l] * b.get(i + k, j + l);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for k in 0..n {
                for l in 0..n {
                    let da = a.get(i + k, j + l) - mu_a;
                    let db = b.get(i + k, j + l) - mu_b;
                    va += kernel[k][l] * da * da;
                    vb += kernel[k][l] * db * db;
                    cov += kernel[k][l] * da * db;
                }
            }
            sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
