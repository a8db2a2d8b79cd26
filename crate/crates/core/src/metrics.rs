//! Training losses and evaluation metrics.
//!
//! All field metrics assume normalized data with a default peak of 1.0.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::GridField;

pub const DEFAULT_PEAK: f64 = 1.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Default adversarial weight in the perceptual composition.
pub const DEFAULT_ADVERSARIAL_WEIGHT: f64 = 1e-3;

pub fn mse(a: &GridField, b: &GridField) -> Result<f64> {
    a.ensure_same_dims(b)?;
    Ok(mse_slice(a.values(), b.values()))
}

pub fn mae(a: &GridField, b: &GridField) -> Result<f64> {
    a.ensure_same_dims(b)?;
    Ok(mae_slice(a.values(), b.values()))
}

pub(crate) fn mse_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub(crate) fn mae_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `10 log10(peak^2 / mse)`, or `+inf` for identical inputs.
pub fn psnr(a: &GridField, b: &GridField, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidConfig(format!("PSNR peak must be positive, got {peak}")));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

#[inline]
fn clamped(i: usize, d: usize, n: usize) -> usize {
    (i + d).saturating_sub(1).min(n - 1)
}

/// Horizontal and vertical Sobel responses with edge clamping.
///
/// Evaluated as weighted differences so that constant regions give exactly
/// zero.
pub fn sobel(values: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    let at = |r: usize, c: usize| values[r * w + c];
    for i in 0..h {
        let (up, down) = (clamped(i, 0, h), clamped(i, 2, h));
        for j in 0..w {
            let (left, right) = (clamped(j, 0, w), clamped(j, 2, w));
            gx[i * w + j] = (at(up, right) - at(up, left))
                + 2.0 * (at(i, right) - at(i, left))
                + (at(down, right) - at(down, left));
            gy[i * w + j] = (at(down, left) - at(up, left))
                + 2.0 * (at(down, j) - at(up, j))
                + (at(down, right) - at(up, right));
        }
    }
    (gx, gy)
}

fn sobel_magnitude(values: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (gx, gy) = sobel(values, h, w);
    gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

fn check_edge_dims(h: usize, w: usize) -> Result<()> {
    if h < 3 || w < 3 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: 3,
        });
    }
    Ok(())
}

/// Mean absolute difference of Sobel gradient magnitudes.
pub fn edge_loss(a: &GridField, b: &GridField) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    check_edge_dims(h, w)?;
    Ok(mae_slice(&sobel_magnitude(a.values(), h, w), &sobel_magnitude(b.values(), h, w)))
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Mean SSIM over all fully contained 11x11 windows.
pub fn ssim(a: &GridField, b: &GridField, peak: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: SSIM_WINDOW,
        });
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let taps = gaussian_window();
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);

    // Five moment maps per row after the horizontal pass.
    let (av, bv) = (a.values(), b.values());
    let mut horiz = vec![[0.0f64; 5]; h * wo];
    for i in 0..h {
        for j in 0..wo {
            let mut m = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let x = av[i * w + j + k];
                let y = bv[i * w + j + k];
                m[0] += t * x;
                m[1] += t * y;
                m[2] += t * (x * x);
                m[3] += t * (y * y);
                m[4] += t * (x * y);
            }
            horiz[i * wo + j] = m;
        }
    }

    let mut total = 0.0;
    for i in 0..ho {
        for j in 0..wo {
            let mut m = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let row = &horiz[(i + k) * wo + j];
                for (acc, v) in m.iter_mut().zip(row) {
                    *acc += t * v;
                }
            }
            total += ssim_from_moments(m, c1, c2);
        }
    }
    Ok(total / (ho * wo) as f64)
}

/// SSIM of one window from `[mu_a, mu_b, E[a^2], E[b^2], E[ab]]`.
#[inline]
pub fn ssim_from_moments(m: [f64; 5], c1: f64, c2: f64) -> f64 {
    let [mu_a, mu_b, eaa, ebb, eab] = m;
    let var_a = eaa - mu_a * mu_a;
    let var_b = ebb - mu_b * mu_b;
    let cov = eab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Content loss plus weighted adversarial loss.
pub fn perceptual_loss(content: f64, adversarial: f64, weight: f64) -> Result<f64> {
    if !(weight >= 0.0) {
        return Err(Error::InvalidConfig(format!("adversarial weight must be >= 0, got {weight}")));
    }
    Ok(content + weight * adversarial)
}

/// Evaluation summary of a prediction against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(pred: &GridField, truth: &GridField, peak: f64) -> Result<Self> {
        let mse = mse(pred, truth)?;
        Ok(Self {
            mse,
            mae: mae(pred, truth)?,
            psnr_db: psnr(pred, truth, peak)?,
            ssim: ssim(pred, truth, peak)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.mse.is_finite() && self.mae.is_finite() && !self.psnr_db.is_nan() && self.ssim.is_finite()
    }
}

impl fmt::Display for MetricReport {
    /// `mse=… mae=… psnr=… ssim=…`; infinite PSNR prints as `inf`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mse={} mae={} psnr={} ssim={}",
            self.mse, self.mae, self.psnr_db, self.ssim
        )
    }
}

/// Training objective for the convolutional models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    Mae,
    Edge,
    /// `mse + edge_weight * edge`
    Composite { edge_weight: f64 },
}

impl LossKind {
    pub const DEFAULT_EDGE_WEIGHT: f64 = 0.1;

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Edge => "edge",
            LossKind::Composite { .. } => "composite",
        }
    }

    pub fn parse(name: &str, edge_weight: f64) -> Result<Self> {
        match name {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "edge" => Ok(LossKind::Edge),
            "composite" => Ok(LossKind::Composite { edge_weight }),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }

    /// Loss of `pred` against `target` (both `h x w`) and its gradient with
    /// respect to `pred`.
    pub fn value_and_grad(&self, pred: &[f64], target: &[f64], h: usize, w: usize) -> Result<(f64, Vec<f64>)> {
        if pred.len() != h * w || target.len() != h * w {
            return Err(Error::ShapeMismatch(format!(
                "loss on {h}x{w} got {} and {} values",
                pred.len(),
                target.len()
            )));
        }
        match *self {
            LossKind::Mse => Ok(mse_grad(pred, target)),
            LossKind::Mae => Ok(mae_grad(pred, target)),
            LossKind::Edge => edge_grad(pred, target, h, w),
            LossKind::Composite { edge_weight } => {
                let (lm, mut gm) = mse_grad(pred, target);
                let (le, ge) = edge_grad(pred, target, h, w)?;
                for (a, b) in gm.iter_mut().zip(ge) {
                    *a += edge_weight * b;
                }
                Ok((lm + edge_weight * le, gm))
            }
        }
    }
}

fn mse_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (mse_slice(pred, target), grad)
}

fn mae_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (mae_slice(pred, target), grad)
}

fn edge_grad(pred: &[f64], target: &[f64], h: usize, w: usize) -> Result<(f64, Vec<f64>)> {
    check_edge_dims(h, w)?;
    let n = (h * w) as f64;
    let (gx, gy) = sobel(pred, h, w);
    let mt = sobel_magnitude(target, h, w);
    let mut loss = 0.0;
    // Gradient with respect to the Sobel responses, then the stencil adjoint.
    let mut dgx = vec![0.0; h * w];
    let mut dgy = vec![0.0; h * w];
    for k in 0..h * w {
        let m = (gx[k] * gx[k] + gy[k] * gy[k]).sqrt();
        let d = m - mt[k];
        loss += d.abs();
        if m > 0.0 && d != 0.0 {
            let s = d.signum() / n;
            dgx[k] = s * gx[k] / m;
            dgy[k] = s * gy[k] / m;
        }
    }
    let mut grad = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (ux, uy) = (dgx[i * w + j], dgy[i * w + j]);
            if ux == 0.0 && uy == 0.0 {
                continue;
            }
            for di in 0..3 {
                let r = clamped(i, di, h);
                for dj in 0..3 {
                    grad[r * w + clamped(j, dj, w)] += SOBEL_X[di][dj] * ux + SOBEL_Y[di][dj] * uy;
                }
            }
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(h: usize, w: usize, v: impl Fn(usize, usize) -> f64) -> GridField {
        GridField::from_fn(h, w, v).unwrap()
    }

    #[test]
    fn closed_forms() {
        let a = f(4, 4, |i, j| (i + j) as f64 * 0.1);
        let b = f(4, 4, |i, j| (i + j) as f64 * 0.1 + 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
        assert_eq!(psnr_from_mse(1.0, 1.0), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let a = f(4, 4, |_, _| 0.0);
        let b = f(4, 5, |_, _| 0.0);
        assert!(mse(&a, &b).is_err());
        assert!(mae(&a, &b).is_err());
        assert!(edge_loss(&a, &b).is_err());
    }

    #[test]
    fn edge_loss_constants_and_step() {
        let a = f(5, 5, |_, _| 0.2);
        let b = f(5, 5, |_, _| 0.9);
        assert_eq!(edge_loss(&a, &b).unwrap(), 0.0);
        // Step between columns 1 and 2: Sobel x response is 4 on columns 1
        // and 2 and 0 elsewhere, so the mean magnitude is 4 * 2 * 5 / 25.
        let step = f(5, 5, |_, j| if j >= 2 { 1.0 } else { 0.0 });
        assert!((edge_loss(&step, &a).unwrap() - 1.6).abs() < 1e-15);
        assert!(edge_loss(&f(2, 5, |_, _| 0.0), &f(2, 5, |_, _| 0.0)).is_err());
    }

    #[test]
    fn ssim_constant_fields() {
        let a = f(16, 16, |_, _| 0.5);
        let b = f(16, 16, |_, _| 0.25);
        let want = (2.0 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4);
        let got = ssim(&a, &b, 1.0).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!(ssim(&f(10, 20, |_, _| 0.0), &f(10, 20, |_, _| 0.0), 1.0).is_err());
    }

    #[test]
    fn ssim_self_is_one() {
        let a = f(13, 17, |i, j| ((i * 3 + j * 7) as f64).sin());
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn perceptual() {
        assert_eq!(perceptual_loss(0.7, 5.0, 0.0).unwrap(), 0.7);
        assert!((perceptual_loss(1.0, 2.0, 1e-3).unwrap() - 1.002).abs() < 1e-15);
        assert!(perceptual_loss(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn report_format() {
        let r = MetricReport {
            mse: 0.0,
            mae: 0.0,
            psnr_db: f64::INFINITY,
            ssim: 1.0,
        };
        assert_eq!(r.to_string(), "mse=0 mae=0 psnr=inf ssim=1");
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let (h, w) = (6, 7);
        let pred: Vec<f64> = (0..h * w).map(|k| ((k * 13 % 17) as f64 * 0.37).sin()).collect();
        let target: Vec<f64> = (0..h * w).map(|k| ((k * 7 % 11) as f64 * 0.53).cos()).collect();
        for kind in [LossKind::Mse, LossKind::Mae, LossKind::Edge, LossKind::Composite { edge_weight: 0.3 }] {
            let (_, g) = kind.value_and_grad(&pred, &target, h, w).unwrap();
            for k in 0..h * w {
                let mut p = pred.clone();
                p[k] += 1e-6;
                let up = kind.value_and_grad(&p, &target, h, w).unwrap().0;
                p[k] -= 2e-6;
                let down = kind.value_and_grad(&p, &target, h, w).unwrap().0;
                let num = (up - down) / 2e-6;
                assert!((num - g[k]).abs() < 1e-6, "{kind:?} at {k}: {num} vs {}", g[k]);
            }
        }
    }
}
