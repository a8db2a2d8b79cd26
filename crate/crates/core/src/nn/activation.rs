//! Pointwise non-linearities: ReLU, sine, Gaussian and complex Gabor wavelet.

use std::fmt;
use std::str::FromStr;

use super::dense::{pack_complex, unpack_complex};
use super::{ComplexTensor, Differentiable, Gradients, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// `sin(omega0 * z)`
    Sine { omega0: f64 },
    /// `exp(-(s * z)^2)`
    Gauss { s: f64 },
    /// `exp(i * omega0 * z) * exp(-|s0 * z|^2)` on complex `z`.
    ComplexGabor { omega0: f64, s0: f64 },
}

impl ActivationKind {
    pub const DEFAULT_SINE_OMEGA0: f64 = 30.0;
    pub const DEFAULT_GAUSS_S: f64 = 10.0;
    pub const DEFAULT_GABOR_OMEGA0: f64 = 20.0;
    pub const DEFAULT_GABOR_S0: f64 = 10.0;

    pub fn sine() -> Self {
        Self::Sine {
            omega0: Self::DEFAULT_SINE_OMEGA0,
        }
    }

    pub fn gauss() -> Self {
        Self::Gauss {
            s: Self::DEFAULT_GAUSS_S,
        }
    }

    pub fn complex_gabor() -> Self {
        Self::ComplexGabor {
            omega0: Self::DEFAULT_GABOR_OMEGA0,
            s0: Self::DEFAULT_GABOR_S0,
        }
    }

    /// The four kinds with default hyperparameters.
    pub fn all_defaults() -> [Self; 4] {
        [Self::Relu, Self::sine(), Self::gauss(), Self::complex_gabor()]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Relu => true,
            Self::Sine { omega0 } => omega0 > 0.0,
            Self::Gauss { s } => s > 0.0,
            Self::ComplexGabor { omega0, s0 } => omega0 > 0.0 && s0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("activation parameters must be positive: {self:?}")))
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Self::ComplexGabor { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Sine { .. } => "siren",
            Self::Gauss { .. } => "gauss",
            Self::ComplexGabor { .. } => "wire",
        }
    }

    /// Value and derivative of a real activation at `z`.
    #[inline]
    fn eval_real(&self, z: f64) -> (f64, f64) {
        match *self {
            Self::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Self::Sine { omega0 } => {
                let (s, c) = super::fastmath::sin_cos(omega0 * z);
                (s, omega0 * c)
            }
            Self::Gauss { s } => {
                let sz = s * z;
                let y = super::fastmath::exp(-sz * sz);
                (y, -2.0 * s * sz * y)
            }
            Self::ComplexGabor { .. } => unreachable!("complex activation on the real path"),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    /// Accepts `relu`, `siren`/`sine`, `gauss`, `wire`/`gabor`, each with
    /// default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Self::Relu),
            "siren" | "sine" => Ok(Self::sine()),
            "gauss" | "gaussian" => Ok(Self::gauss()),
            "wire" | "gabor" | "complex-gabor" => Ok(Self::complex_gabor()),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

/// Applies a real activation elementwise. Complex Gabor needs
/// [`activate_complex`].
pub fn activate(kind: ActivationKind, z: &Tensor) -> Result<Tensor> {
    Ok(Activation::new(kind)?.apply_real(z)?.0)
}

/// Applies the complex Gabor wavelet elementwise.
pub fn activate_complex(omega0: f64, s0: f64, z: &ComplexTensor) -> ComplexTensor {
    ComplexGabor { omega0, s0 }.apply(z)
}

/// Real activation block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Result<Self> {
        kind.validate()?;
        if kind.is_complex() {
            return Err(Error::InvalidConfig(
                "complex Gabor activation has no real form; use ComplexGabor".into(),
            ));
        }
        Ok(Self { kind })
    }

    /// Output plus the pointwise derivative.
    pub fn apply_real(&self, z: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let mut out = Tensor::zeros(z.shape());
        let mut deriv = vec![0.0; z.len()];
        for ((y, d), &v) in out.data_mut().iter_mut().zip(deriv.iter_mut()).zip(z.data()) {
            (*y, *d) = self.kind.eval_real(v);
        }
        Ok((out, deriv))
    }

    /// Overwrites `z` with the activation; returns the derivative.
    pub fn apply_in_place(&self, z: &mut Tensor) -> Vec<f64> {
        use super::fastmath::{all_exp_reducible, all_reducible, exp_reduced, sin_cos_reduced};
        let mut deriv = vec![0.0; z.len()];
        // Same values as `eval_real`, minus the per-element range branch.
        match self.kind {
            ActivationKind::Sine { omega0 } if all_reducible(z.data(), omega0) => {
                for (v, d) in z.data_mut().iter_mut().zip(deriv.iter_mut()) {
                    let (s, c) = sin_cos_reduced(omega0 * *v);
                    (*v, *d) = (s, omega0 * c);
                }
            }
            ActivationKind::Gauss { s } if all_exp_reducible(z.data().iter().map(|&v| -(s * v) * (s * v))) => {
                for (v, d) in z.data_mut().iter_mut().zip(deriv.iter_mut()) {
                    let sz = s * *v;
                    let y = exp_reduced(-sz * sz);
                    (*v, *d) = (y, -2.0 * s * sz * y);
                }
            }
            kind => {
                for (v, d) in z.data_mut().iter_mut().zip(deriv.iter_mut()) {
                    (*v, *d) = kind.eval_real(*v);
                }
            }
        }
        deriv
    }

    /// In-place form of [`Self::backward_real`].
    pub fn scale_in_place(deriv: &[f64], grad: &mut Tensor) {
        for (v, d) in grad.data_mut().iter_mut().zip(deriv) {
            *v *= d;
        }
    }

    pub fn backward_real(deriv: &[f64], grad_out: &Tensor) -> Tensor {
        let mut g = grad_out.clone();
        for (v, d) in g.data_mut().iter_mut().zip(deriv) {
            *v *= d;
        }
        g
    }
}

impl Differentiable for Activation {
    type Cache = Vec<f64>;

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        self.apply_real(x)
    }

    fn backward(&self, deriv: &Vec<f64>, grad_out: &Tensor) -> Result<Gradients> {
        if deriv.len() != grad_out.len() {
            return Err(Error::ShapeMismatch("activation gradient size".into()));
        }
        Ok(Gradients {
            params: Vec::new(),
            input: Self::backward_real(deriv, grad_out),
        })
    }

    fn param_count(&self) -> usize {
        0
    }

    fn params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.is_empty() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("activation has no parameters".into()))
        }
    }
}

/// Complex Gabor wavelet `exp(i*omega0*z) * exp(-|s0*z|^2)`.
///
/// For `z = a + ib` this is `exp(-omega0*b - s0^2 (a^2 + b^2)) * (cos(omega0*a) + i sin(omega0*a))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGabor {
    pub omega0: f64,
    pub s0: f64,
}

/// Cached pre-activation and output of a Gabor block.
#[derive(Debug, Clone)]
pub struct GaborCache {
    pub z: ComplexTensor,
    pub y: ComplexTensor,
}

impl ComplexGabor {
    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> (f64, f64) {
        let env = super::fastmath::exp(self.envelope_arg(a, b));
        let (s, c) = super::fastmath::sin_cos(self.omega0 * a);
        (env * c, env * s)
    }

    #[inline(always)]
    fn envelope_arg(&self, a: f64, b: f64) -> f64 {
        -self.omega0 * b - self.s0 * self.s0 * (a * a + b * b)
    }

    #[inline(always)]
    fn eval_reduced(&self, a: f64, b: f64) -> (f64, f64) {
        let env = super::fastmath::exp_reduced(self.envelope_arg(a, b));
        let (s, c) = super::fastmath::sin_cos_reduced(self.omega0 * a);
        (env * c, env * s)
    }

    pub fn apply(&self, z: &ComplexTensor) -> ComplexTensor {
        use super::fastmath::{all_exp_reducible, all_reducible};
        let mut re = Tensor::zeros(z.shape());
        let mut im = Tensor::zeros(z.shape());
        let (zr, zi) = (z.re.data(), z.im.data());
        let fast = all_reducible(zr, self.omega0)
            && all_exp_reducible(zr.iter().zip(zi).map(|(&a, &b)| self.envelope_arg(a, b)));
        let outputs = re.data_mut().iter_mut().zip(im.data_mut().iter_mut());
        if fast {
            for ((yr, yi), (&a, &b)) in outputs.zip(zr.iter().zip(zi)) {
                (*yr, *yi) = self.eval_reduced(a, b);
            }
        } else {
            for ((yr, yi), (&a, &b)) in outputs.zip(zr.iter().zip(zi)) {
                (*yr, *yi) = self.eval(a, b);
            }
        }
        ComplexTensor { re, im }
    }

    /// Gradient with respect to `(Re z, Im z)` given the upstream gradient with
    /// respect to `(Re y, Im y)`.
    pub fn backward(&self, cache: &GaborCache, grad_out: &ComplexTensor) -> ComplexTensor {
        let k = 2.0 * self.s0 * self.s0;
        let w = self.omega0;
        let mut gre = Tensor::zeros(cache.z.shape());
        let mut gim = Tensor::zeros(cache.z.shape());
        let zr = cache.z.re.data();
        let zi = cache.z.im.data();
        let yr = cache.y.re.data();
        let yi = cache.y.im.data();
        let gr = grad_out.re.data();
        let gi = grad_out.im.data();
        for (n, (da, db)) in gre.data_mut().iter_mut().zip(gim.data_mut()).enumerate() {
            let (a, b) = (zr[n], zi[n]);
            // d yr/da = -k a yr - w yi, d yi/da = -k a yi + w yr
            // d yr/db = -(w + k b) yr, d yi/db = -(w + k b) yi
            *da = gr[n] * (-k * a * yr[n] - w * yi[n]) + gi[n] * (-k * a * yi[n] + w * yr[n]);
            let m = -(w + k * b);
            *db = m * (gr[n] * yr[n] + gi[n] * yi[n]);
        }
        ComplexTensor { re: gre, im: gim }
    }
}

impl Differentiable for ComplexGabor {
    type Cache = GaborCache;

    /// Takes and returns packed `[2, ..]` tensors (real half, imaginary half).
    fn forward(&self, x: &Tensor) -> Result<(Tensor, GaborCache)> {
        let z = unpack_complex(x)?;
        let y = self.apply(&z);
        Ok((pack_complex(&y), GaborCache { z, y }))
    }

    fn backward(&self, cache: &GaborCache, grad_out: &Tensor) -> Result<Gradients> {
        let g = unpack_complex(grad_out)?;
        Ok(Gradients {
            params: Vec::new(),
            input: pack_complex(&ComplexGabor::backward(self, cache, &g)),
        })
    }

    fn param_count(&self) -> usize {
        0
    }

    fn params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.is_empty() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("activation has no parameters".into()))
        }
    }
}
