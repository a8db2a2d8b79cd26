//! 2-D cross-correlation over `[h, w, c]` tensors via im2col + GEMM.
//!
//! Padding replicates edge pixels, so a stride-1 layer keeps the spatial size.
//! A stride-`s` layer samples output pixel `(i, j)` around input pixel
//! `(s*i, s*j)` and needs the input size to be a multiple of `s`.

use super::gemm::{gemm, Op};
use super::init::InitScheme;
use super::{scatter_params, Differentiable, Gradients, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[out_c, in_c, kh, kw]`
    pub w: Tensor,
    /// `[out_c]`
    pub b: Tensor,
    pub stride: usize,
}

impl ConvLayer {
    pub fn new(w: Tensor, b: Tensor, stride: usize) -> Result<Self> {
        let s = w.shape();
        if s.len() != 4 || b.shape() != [s[0]] {
            return Err(Error::ShapeMismatch(format!(
                "conv weights {:?} with bias {:?}",
                s,
                b.shape()
            )));
        }
        if s[2] % 2 == 0 || s[3] % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv kernel must be odd, got {}x{}",
                s[2], s[3]
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv stride must be positive".into()));
        }
        Ok(Self { w, b, stride })
    }

    /// Square `kernel x kernel` layer, biases zero.
    pub fn init(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        scheme: InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = in_c * kernel * kernel;
        let w = scheme.sample(&[out_c, in_c, kernel, kernel], fan_in, rng);
        Self::new(w, Tensor::zeros(&[out_c]), stride)
    }

    pub fn out_channels(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.w.shape()[2], self.w.shape()[3])
    }

    fn patch_len(&self) -> usize {
        let (kh, kw) = self.kernel();
        kh * kw * self.in_channels()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "conv expects [h, w, {}], got {s:?}",
                self.in_channels()
            )));
        }
        if s[0] % self.stride != 0 || s[1] % self.stride != 0 {
            return Err(Error::NotDivisible {
                height: s[0],
                width: s[1],
                factor: self.stride,
            });
        }
        Ok((s[0], s[1], s[0] / self.stride, s[1] / self.stride))
    }

    /// Weights permuted to `[out_c, kh*kw*in_c]` to match the im2col layout.
    fn weight_matrix(&self) -> Vec<f64> {
        let (oc, ic) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel();
        let k = self.patch_len();
        let src = self.w.data();
        let mut out = vec![0.0; oc * k];
        for o in 0..oc {
            for c in 0..ic {
                for di in 0..kh {
                    for dj in 0..kw {
                        out[o * k + (di * kw + dj) * ic + c] = src[((o * ic + c) * kh + di) * kw + dj];
                    }
                }
            }
        }
        out
    }

    /// Visits every (output pixel, tap) pair with the clamped source pixel.
    fn for_each_tap(
        &self,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize),
    ) {
        let (kh, kw) = self.kernel();
        let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
        let (ho, wo) = (h / self.stride, w / self.stride);
        let (hmax, wmax) = (h as isize - 1, w as isize - 1);
        for oi in 0..ho {
            for oj in 0..wo {
                let p = oi * wo + oj;
                let ci = (oi * self.stride) as isize;
                let cj = (oj * self.stride) as isize;
                for di in 0..kh {
                    let si = (ci + di as isize - ph).clamp(0, hmax) as usize;
                    for dj in 0..kw {
                        let sj = (cj + dj as isize - pw).clamp(0, wmax) as usize;
                        f(p, di * kw + dj, si * w + sj);
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &Tensor, h: usize, w: usize) -> Vec<f64> {
        let ic = self.in_channels();
        let k = self.patch_len();
        let (ho, wo) = (h / self.stride, w / self.stride);
        let mut cols = vec![0.0; ho * wo * k];
        let src = x.data();
        self.for_each_tap(h, w, |p, tap, s| {
            let dst = p * k + tap * ic;
            cols[dst..dst + ic].copy_from_slice(&src[s * ic..(s + 1) * ic]);
        });
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize) -> Vec<f64> {
        let ic = self.in_channels();
        let k = self.patch_len();
        let mut out = vec![0.0; h * w * ic];
        self.for_each_tap(h, w, |p, tap, s| {
            let src = p * k + tap * ic;
            for c in 0..ic {
                out[s * ic + c] += cols[src + c];
            }
        });
        out
    }
}

impl Differentiable for ConvLayer {
    /// The layer input; patches are rebuilt during backward.
    type Cache = Tensor;

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (h, w, ho, wo) = self.check_input(x)?;
        let oc = self.out_channels();
        let k = self.patch_len();
        let cols = self.im2col(x, h, w);
        let mut out = Tensor::zeros(&[ho, wo, oc]);
        for px in out.data_mut().chunks_mut(oc) {
            px.copy_from_slice(self.b.data());
        }
        gemm(ho * wo, k, oc, 1.0, &cols, Op::N, &self.weight_matrix(), Op::T, 1.0, out.data_mut());
        Ok((out, x.clone()))
    }

    fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<Gradients> {
        let (h, w, ho, wo) = self.check_input(x)?;
        let (oc, ic) = (self.out_channels(), self.in_channels());
        let (kh, kw) = self.kernel();
        let k = self.patch_len();
        grad_out.ensure_shape(&[ho, wo, oc])?;
        let cols = self.im2col(x, h, w);
        let g = grad_out.data();

        let mut gwm = vec![0.0; oc * k];
        gemm(oc, ho * wo, k, 1.0, g, Op::T, &cols, Op::N, 0.0, &mut gwm);
        let mut params = vec![0.0; oc * k + oc];
        for o in 0..oc {
            for c in 0..ic {
                for di in 0..kh {
                    for dj in 0..kw {
                        params[((o * ic + c) * kh + di) * kw + dj] = gwm[o * k + (di * kw + dj) * ic + c];
                    }
                }
            }
        }
        let gb = &mut params[oc * k..];
        for px in g.chunks(oc) {
            for (acc, v) in gb.iter_mut().zip(px) {
                *acc += v;
            }
        }

        let mut gcols = vec![0.0; ho * wo * k];
        gemm(ho * wo, oc, k, 1.0, g, Op::N, &self.weight_matrix(), Op::N, 0.0, &mut gcols);
        let input = Tensor::new(x.shape(), self.col2im(&gcols, h, w))?;
        Ok(Gradients { params, input })
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.w.data().to_vec();
        p.extend_from_slice(self.b.data());
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        scatter_params(params, &mut [&mut self.w, &mut self.b])
    }
}
