use super::gemm::{gemm, Op};
use super::init::InitScheme;
use super::{scatter_params, ComplexTensor, Differentiable, Gradients, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer `y = W x + b` applied over the last axis.
///
/// Complex layers keep the imaginary parts of `W` and `b` alongside the real
/// ones and are driven through [`DenseLayer::forward_complex`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out, in]`
    pub w: Tensor,
    /// `[out]`
    pub b: Tensor,
    pub w_im: Option<Tensor>,
    pub b_im: Option<Tensor>,
}

impl DenseLayer {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        let layer = Self {
            w,
            b,
            w_im: None,
            b_im: None,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn new_complex(w: Tensor, w_im: Tensor, b: Tensor, b_im: Tensor) -> Result<Self> {
        let layer = Self {
            w,
            b,
            w_im: Some(w_im),
            b_im: Some(b_im),
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Real layer with weights from `weights` and biases from `bias`.
    pub fn init(
        inputs: usize,
        outputs: usize,
        weights: InitScheme,
        bias: InitScheme,
        rng: &mut Rng,
    ) -> Self {
        Self {
            w: weights.sample(&[outputs, inputs], inputs, rng),
            b: bias.sample(&[outputs], inputs, rng),
            w_im: None,
            b_im: None,
        }
    }

    /// Complex layer; real and imaginary parts drawn independently.
    pub fn init_complex(
        inputs: usize,
        outputs: usize,
        weights: InitScheme,
        bias: InitScheme,
        rng: &mut Rng,
    ) -> Self {
        let w = weights.sample(&[outputs, inputs], inputs, rng);
        let w_im = weights.sample(&[outputs, inputs], inputs, rng);
        let b = bias.sample(&[outputs], inputs, rng);
        let b_im = bias.sample(&[outputs], inputs, rng);
        Self {
            w,
            b,
            w_im: Some(w_im),
            b_im: Some(b_im),
        }
    }

    fn validate(&self) -> Result<()> {
        let shape = self.w.shape();
        if shape.len() != 2 || self.b.shape() != [shape[0]] {
            return Err(Error::ShapeMismatch(format!(
                "dense weights {:?} with bias {:?}",
                shape,
                self.b.shape()
            )));
        }
        match (&self.w_im, &self.b_im) {
            (None, None) => Ok(()),
            (Some(wi), Some(bi)) => {
                wi.ensure_shape(shape)?;
                bi.ensure_shape(self.b.shape())
            }
            _ => Err(Error::ShapeMismatch(
                "complex dense layer needs both imaginary weights and bias".into(),
            )),
        }
    }

    pub fn complex_valued(&self) -> bool {
        self.w_im.is_some()
    }

    pub fn inputs(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape()[0]
    }

    fn out_shape(&self, x: &Tensor) -> Result<Vec<usize>> {
        if x.last_dim() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects last dim {}, got {:?}",
                self.inputs(),
                x.shape()
            )));
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = self.outputs();
        Ok(shape)
    }

    /// `out += x W^T` for rows of `x`.
    fn apply(w: &Tensor, x: &Tensor, alpha: f64, out: &mut [f64]) {
        let (o, i) = (w.shape()[0], w.shape()[1]);
        gemm(x.rows(), i, o, alpha, x.data(), Op::N, w.data(), Op::T, 1.0, out);
    }

    fn add_bias(b: &Tensor, out: &mut [f64]) {
        for row in out.chunks_mut(b.len()) {
            for (y, bias) in row.iter_mut().zip(b.data()) {
                *y += bias;
            }
        }
    }

    /// Real forward pass. Complex layers must use [`Self::forward_complex`].
    pub fn forward_real(&self, x: &Tensor) -> Result<Tensor> {
        if self.complex_valued() {
            return Err(Error::ShapeMismatch(
                "complex dense layer needs a complex input".into(),
            ));
        }
        let shape = self.out_shape(x)?;
        let mut out = Tensor::zeros(&shape);
        Self::add_bias(&self.b, out.data_mut());
        Self::apply(&self.w, x, 1.0, out.data_mut());
        Ok(out)
    }

    /// Complex forward pass `(Wr + i Wi)(xr + i xi) + (br + i bi)`. A real
    /// layer treats its weights as having zero imaginary part.
    pub fn forward_complex(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        let shape = self.out_shape(&x.re)?;
        let mut re = Tensor::zeros(&shape);
        let mut im = Tensor::zeros(&shape);
        Self::add_bias(&self.b, re.data_mut());
        let (Some(wi), Some(bi)) = (&self.w_im, &self.b_im) else {
            Self::apply(&self.w, &x.re, 1.0, re.data_mut());
            Self::apply(&self.w, &x.im, 1.0, im.data_mut());
            return Ok(ComplexTensor { re, im });
        };
        // Three real products instead of four:
        // re = Wr xr - Wi xi, im = (Wr + Wi)(xr + xi) - Wr xr - Wi xi.
        Self::add_bias(bi, im.data_mut());
        let w_sum = Tensor::new(self.w.shape(), combine(self.w.data(), wi.data(), 1.0))?;
        let x_sum = Tensor::new(x.re.shape(), combine(x.re.data(), x.im.data(), 1.0))?;
        Self::apply(&w_sum, &x_sum, 1.0, im.data_mut());
        let mut rr = Tensor::zeros(&shape);
        let mut ii = Tensor::zeros(&shape);
        Self::apply(&self.w, &x.re, 1.0, rr.data_mut());
        Self::apply(wi, &x.im, 1.0, ii.data_mut());
        for (((r, m), &a), &b) in re.data_mut().iter_mut().zip(im.data_mut()).zip(rr.data()).zip(ii.data()) {
            *r += a - b;
            *m -= a + b;
        }
        Ok(ComplexTensor { re, im })
    }

    /// Real backward pass; returns `[dW, db]` flattened and `dx`.
    pub fn backward_real(&self, x: &Tensor, grad_out: &Tensor) -> Result<Gradients> {
        grad_out.ensure_shape(&self.out_shape(x)?)?;
        let (o, i) = (self.outputs(), self.inputs());
        let rows = x.rows();
        let mut params = vec![0.0; o * i + o];
        let (gw, gb) = params.split_at_mut(o * i);
        gemm(o, rows, i, 1.0, grad_out.data(), Op::T, x.data(), Op::N, 0.0, gw);
        for row in grad_out.data().chunks(o) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut input = Tensor::zeros(x.shape());
        gemm(rows, o, i, 1.0, grad_out.data(), Op::N, self.w.data(), Op::N, 0.0, input.data_mut());
        Ok(Gradients { params, input })
    }

    /// Complex backward pass, gradients of a real loss with respect to the
    /// real and imaginary parts treated as independent variables. Parameter
    /// gradients are laid out as in [`Differentiable::params`].
    pub fn backward_complex(
        &self,
        x: &ComplexTensor,
        grad_out: &ComplexTensor,
    ) -> Result<(Vec<f64>, ComplexTensor)> {
        let shape = self.out_shape(&x.re)?;
        grad_out.re.ensure_shape(&shape)?;
        grad_out.im.ensure_shape(&shape)?;
        let (o, i) = (self.outputs(), self.inputs());
        let rows = x.re.rows();
        let (gr, gi) = (grad_out.re.data(), grad_out.im.data());
        let (xr, xi) = (x.re.data(), x.im.data());

        let bias_grad = |g: &[f64]| {
            let mut out = vec![0.0; o];
            for row in g.chunks(o) {
                for (acc, v) in out.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            out
        };

        let mut dx_re = Tensor::zeros(x.re.shape());
        let mut dx_im = Tensor::zeros(x.re.shape());
        let Some(wi) = &self.w_im else {
            // dW = gr^T xr + gi^T xi; dxr = gr W; dxi = gi W
            let mut gw = vec![0.0; o * i];
            gemm(o, rows, i, 1.0, gr, Op::T, xr, Op::N, 0.0, &mut gw);
            gemm(o, rows, i, 1.0, gi, Op::T, xi, Op::N, 1.0, &mut gw);
            gemm(rows, o, i, 1.0, gr, Op::N, self.w.data(), Op::N, 0.0, dx_re.data_mut());
            gemm(rows, o, i, 1.0, gi, Op::N, self.w.data(), Op::N, 0.0, dx_im.data_mut());
            let mut params = gw;
            params.extend(bias_grad(gr));
            return Ok((params, ComplexTensor { re: dx_re, im: dx_im }));
        };
        // With A = gr^T xr, B = gi^T xi, C = (gr + gi)^T (xr - xi):
        // dWr = A + B, dWi = C - A + B. Likewise for the input gradient with
        // D = gr Wr, E = gi Wi, F = (gr + gi)(Wr - Wi): dxr = D + E, dxi = F - D + E.
        let g_sum = combine(gr, gi, 1.0);
        let x_diff = combine(xr, xi, -1.0);
        let w_diff = combine(self.w.data(), wi.data(), -1.0);
        let mut a_mat = vec![0.0; o * i];
        let mut b_mat = vec![0.0; o * i];
        let mut gwi = vec![0.0; o * i];
        gemm(o, rows, i, 1.0, gr, Op::T, xr, Op::N, 0.0, &mut a_mat);
        gemm(o, rows, i, 1.0, gi, Op::T, xi, Op::N, 0.0, &mut b_mat);
        gemm(o, rows, i, 1.0, &g_sum, Op::T, &x_diff, Op::N, 0.0, &mut gwi);
        let mut gw = vec![0.0; o * i];
        for (((wr, wm), a), b) in gw.iter_mut().zip(gwi.iter_mut()).zip(&a_mat).zip(&b_mat) {
            *wr = a + b;
            *wm += b - a;
        }
        let mut e_mat = Tensor::zeros(x.re.shape());
        gemm(rows, o, i, 1.0, gr, Op::N, self.w.data(), Op::N, 0.0, dx_re.data_mut());
        gemm(rows, o, i, 1.0, gi, Op::N, wi.data(), Op::N, 0.0, e_mat.data_mut());
        gemm(rows, o, i, 1.0, &g_sum, Op::N, &w_diff, Op::N, 0.0, dx_im.data_mut());
        for ((dr, dm), e) in dx_re.data_mut().iter_mut().zip(dx_im.data_mut()).zip(e_mat.data()) {
            *dm += e - *dr;
            *dr += e;
        }
        let mut params = gw;
        params.extend(bias_grad(gr));
        params.extend(gwi);
        params.extend(bias_grad(gi));
        Ok((
            params,
            ComplexTensor {
                re: dx_re,
                im: dx_im,
            },
        ))
    }
}

/// `a + sign * b` elementwise.
fn combine(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + sign * y).collect()
}

impl Differentiable for DenseLayer {
    type Cache = Tensor;

    /// Real layers take `[.., in]`. Complex layers take a packed `[2, .., in]`
    /// tensor (real half then imaginary half) and return the same packing.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if !self.complex_valued() {
            return Ok((self.forward_real(x)?, x.clone()));
        }
        let cx = unpack_complex(x)?;
        let y = self.forward_complex(&cx)?;
        Ok((pack_complex(&y), x.clone()))
    }

    fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<Gradients> {
        if !self.complex_valued() {
            return self.backward_real(x, grad_out);
        }
        let (params, gx) = self.backward_complex(&unpack_complex(x)?, &unpack_complex(grad_out)?)?;
        Ok(Gradients {
            params,
            input: pack_complex(&gx),
        })
    }

    fn param_count(&self) -> usize {
        let n = self.w.len() + self.b.len();
        if self.complex_valued() {
            2 * n
        } else {
            n
        }
    }

    /// `[W, b]`, then `[W_im, b_im]` for complex layers.
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(self.w.data());
        p.extend_from_slice(self.b.data());
        if let (Some(wi), Some(bi)) = (&self.w_im, &self.b_im) {
            p.extend_from_slice(wi.data());
            p.extend_from_slice(bi.data());
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        match (&mut self.w_im, &mut self.b_im) {
            (Some(wi), Some(bi)) => scatter_params(params, &mut [&mut self.w, &mut self.b, wi, bi]),
            _ => scatter_params(params, &mut [&mut self.w, &mut self.b]),
        }
    }
}

/// Splits a `[2, ..]` tensor into real and imaginary halves.
pub fn unpack_complex(x: &Tensor) -> Result<ComplexTensor> {
    if x.shape().len() < 2 || x.shape()[0] != 2 {
        return Err(Error::ShapeMismatch(format!(
            "packed complex tensor needs leading axis 2, got {:?}",
            x.shape()
        )));
    }
    let inner = &x.shape()[1..];
    let half = x.len() / 2;
    Ok(ComplexTensor {
        re: Tensor::new(inner, x.data()[..half].to_vec())?,
        im: Tensor::new(inner, x.data()[half..].to_vec())?,
    })
}

/// Inverse of [`unpack_complex`].
pub fn pack_complex(x: &ComplexTensor) -> Tensor {
    let mut shape = vec![2];
    shape.extend_from_slice(x.shape());
    let mut data = x.re.data().to_vec();
    data.extend_from_slice(x.im.data());
    Tensor::new(&shape, data).expect("packed shape matches")
}
