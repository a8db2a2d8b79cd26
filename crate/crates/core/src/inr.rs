//! Implicit neural representations: an MLP from pixel coordinates to field
//! values, fitted to one field and then sampled on any grid.
//!
//! Layout is `2 -> width -> ... -> width -> 1` with `n_hidden_layers` hidden
//! layers. Real activations use real layers throughout. The complex Gabor
//! variant keeps the first layer real, feeds `z + 0i` into the wavelet, runs
//! the remaining layers in complex arithmetic and reads out the real part.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{denormalize, normalize, GridField, NormStats};
use crate::metrics::{MetricReport, DEFAULT_PEAK};
use crate::nn::{
    ActivationKind, AdamConfig, AdamState, Activation, Checkpoint, ComplexGabor, ComplexTensor, DenseLayer,
    Differentiable, Gradients, InitScheme, LayerRecord, Tensor,
};
use crate::nn::activation::GaborCache;
use crate::rng::{self, Rng};

const STREAM_INIT: &str = "inr.init";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InrConfig {
    pub n_hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: ActivationKind,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for InrConfig {
    fn default() -> Self {
        Self {
            n_hidden_layers: 2,
            hidden_width: 256,
            activation: ActivationKind::sine(),
            epochs: 2000,
            lr: AdamConfig::INR_LR,
        }
    }
}

impl InrConfig {
    pub fn with_activation(activation: ActivationKind) -> Self {
        Self {
            activation,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "INR needs at least one hidden layer of width >= 1, got {} x {}",
                self.n_hidden_layers, self.hidden_width
            )));
        }
        self.activation.validate()?;
        AdamConfig::with_lr(self.lr).validate()
    }
}

/// Pixel-center coordinates in `[-1, 1]`, row-major, `(y, x)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    pub height: usize,
    pub width: usize,
    pub coords: Vec<[f64; 2]>,
}

impl CoordGrid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// `[h*w, 2]`
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.coords.len(), 2], self.coords.iter().flatten().copied().collect())
            .expect("two values per coordinate")
    }
}

fn axis_coord(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * (i as f64 + 0.5) / n as f64
}

pub fn make_coord_grid(height: usize, width: usize) -> Result<CoordGrid> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidField(format!("coordinate grid {height}x{width}")));
    }
    let mut coords = Vec::with_capacity(height * width);
    for i in 0..height {
        let y = axis_coord(i, height);
        for j in 0..width {
            coords.push([y, axis_coord(j, width)]);
        }
    }
    Ok(CoordGrid { height, width, coords })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InrModel {
    pub activation: ActivationKind,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub enum InrCache {
    Real {
        /// Input of every layer, the coordinates first.
        inputs: Vec<Tensor>,
        derivs: Vec<Vec<f64>>,
    },
    Complex {
        coords: Tensor,
        /// Wavelet caches; each `y` is the next layer's input.
        gabor: Vec<GaborCache>,
    },
}

impl InrModel {
    pub fn init(config: &InrConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let act = config.activation;
        let width = config.hidden_width;
        let mut layers = Vec::with_capacity(config.n_hidden_layers + 1);
        let bias = InitScheme::FanInUniform;
        for l in 0..=config.n_hidden_layers {
            let inputs = if l == 0 { 2 } else { width };
            let outputs = if l == config.n_hidden_layers { 1 } else { width };
            let weights = match act {
                ActivationKind::Relu => {
                    if l == config.n_hidden_layers {
                        InitScheme::FanInUniform
                    } else {
                        InitScheme::HeUniform
                    }
                }
                ActivationKind::Sine { omega0 } => {
                    if l == 0 {
                        InitScheme::SirenFirst
                    } else {
                        InitScheme::SirenHidden { omega0 }
                    }
                }
                ActivationKind::Gauss { .. } | ActivationKind::ComplexGabor { .. } => InitScheme::FanInUniform,
            };
            layers.push(if act.is_complex() && l > 0 {
                DenseLayer::init_complex(inputs, outputs, weights, bias, rng)
            } else {
                DenseLayer::init(inputs, outputs, weights, bias, rng)
            });
        }
        Ok(Self { activation: act, layers })
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].outputs()
    }

    fn gabor(&self) -> Option<ComplexGabor> {
        match self.activation {
            ActivationKind::ComplexGabor { omega0, s0 } => Some(ComplexGabor { omega0, s0 }),
            _ => None,
        }
    }

    fn check_coords(x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.shape()[1] != 2 {
            return Err(Error::ShapeMismatch(format!("INR expects [n, 2] coordinates, got {:?}", x.shape())));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, stats: Option<NormStats>) -> Checkpoint {
        let mut ck = Checkpoint {
            layers: self.layers.iter().cloned().map(LayerRecord::Dense).collect(),
            metadata: Vec::new(),
        };
        ck.set_meta("model", "inr");
        ck.set_meta("activation", self.activation.name());
        match self.activation {
            ActivationKind::Relu => {}
            ActivationKind::Sine { omega0 } => ck.set_meta("omega0", omega0),
            ActivationKind::Gauss { s } => ck.set_meta("s", s),
            ActivationKind::ComplexGabor { omega0, s0 } => {
                ck.set_meta("omega0", omega0);
                ck.set_meta("s0", s0);
            }
        }
        if let Some(s) = stats {
            ck.set_meta("norm_min", s.min_val);
            ck.set_meta("norm_max", s.max_val);
        }
        ck
    }

    /// Model plus the normalization stored with it, if any.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<NormStats>)> {
        if ck.meta("model") != Some("inr") {
            return Err(Error::InvalidCheckpoint("expected an inr checkpoint".into()));
        }
        let num = |k: &str| -> Result<f64> {
            ck.meta(k)
                .ok_or_else(|| Error::InvalidCheckpoint(format!("missing {k}")))?
                .parse()
                .map_err(|e| Error::InvalidCheckpoint(format!("{k}: {e}")))
        };
        let activation = match ck.meta("activation") {
            Some("relu") => ActivationKind::Relu,
            Some("siren") => ActivationKind::Sine { omega0: num("omega0")? },
            Some("gauss") => ActivationKind::Gauss { s: num("s")? },
            Some("wire") => ActivationKind::ComplexGabor {
                omega0: num("omega0")?,
                s0: num("s0")?,
            },
            other => return Err(Error::InvalidCheckpoint(format!("activation {other:?}"))),
        };
        let layers: Vec<DenseLayer> = ck
            .layers
            .iter()
            .map(|l| match l {
                LayerRecord::Dense(d) => Ok(d.clone()),
                LayerRecord::Conv(_) => Err(Error::InvalidCheckpoint("INR layers must be dense".into())),
            })
            .collect::<Result<_>>()?;
        let n = layers.len();
        let chained = n >= 2
            && layers[0].inputs() == 2
            && layers[n - 1].outputs() == 1
            && layers.windows(2).all(|p| p[0].outputs() == p[1].inputs())
            && layers
                .iter()
                .enumerate()
                .all(|(i, l)| l.complex_valued() == (activation.is_complex() && i > 0));
        if !chained {
            return Err(Error::InvalidCheckpoint("INR layer shapes do not chain".into()));
        }
        let stats = match (ck.meta("norm_min"), ck.meta("norm_max")) {
            (Some(_), Some(_)) => Some(NormStats::new(num("norm_min")?, num("norm_max")?)?),
            _ => None,
        };
        Ok((Self { activation, layers }, stats))
    }
}

impl Differentiable for InrModel {
    type Cache = InrCache;

    /// `[n, 2]` coordinates in, `[n, 1]` values out.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, InrCache)> {
        Self::check_coords(x)?;
        let (hidden, out) = self.layers.split_at(self.layers.len() - 1);
        let out = &out[0];
        match self.gabor() {
            None => {
                let act = Activation { kind: self.activation };
                let mut inputs = Vec::with_capacity(self.layers.len());
                let mut derivs = Vec::with_capacity(hidden.len());
                inputs.push(x.clone());
                for layer in hidden {
                    let mut a = layer.forward_real(inputs.last().expect("non-empty"))?;
                    derivs.push(act.apply_in_place(&mut a));
                    inputs.push(a);
                }
                let y = out.forward_real(inputs.last().expect("non-empty"))?;
                Ok((y, InrCache::Real { inputs, derivs }))
            }
            Some(g) => {
                let mut gabor: Vec<GaborCache> = Vec::with_capacity(hidden.len());
                for (l, layer) in hidden.iter().enumerate() {
                    let z = if l == 0 {
                        ComplexTensor::from_real(layer.forward_real(x)?)
                    } else {
                        layer.forward_complex(&gabor[l - 1].y)?
                    };
                    let y = g.apply(&z);
                    gabor.push(GaborCache { z, y });
                }
                let y = out.forward_complex(&gabor.last().expect("non-empty").y)?;
                Ok((
                    y.re,
                    InrCache::Complex {
                        coords: x.clone(),
                        gabor,
                    },
                ))
            }
        }
    }

    fn backward(&self, cache: &InrCache, grad_out: &Tensor) -> Result<Gradients> {
        let n_layers = self.layers.len();
        let mut per_layer: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let input = match cache {
            InrCache::Real { inputs, derivs } => {
                let mut g = self.layers[n_layers - 1].backward_real(&inputs[n_layers - 1], grad_out)?;
                per_layer.push(g.params);
                for l in (0..n_layers - 1).rev() {
                    Activation::scale_in_place(&derivs[l], &mut g.input);
                    g = self.layers[l].backward_real(&inputs[l], &g.input)?;
                    per_layer.push(g.params);
                }
                g.input
            }
            InrCache::Complex { coords, gabor } => {
                let act = self.gabor().expect("complex cache implies a Gabor model");
                let mut g = ComplexTensor::from_real(grad_out.clone());
                for l in (1..n_layers).rev() {
                    let (p, gi) = self.layers[l].backward_complex(&gabor[l - 1].y, &g)?;
                    per_layer.push(p);
                    g = act.backward(&gabor[l - 1], &gi);
                }
                // The first layer's pre-activation has a constant zero
                // imaginary part, so only the real gradient flows back.
                let gl = self.layers[0].backward_real(coords, &g.re)?;
                per_layer.push(gl.params);
                gl.input
            }
        };
        let params = per_layer.into_iter().rev().flatten().collect();
        Ok(Gradients { params, input })
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("INR parameter count".into()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.param_count();
            l.set_params(&params[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }
}

/// Model output at every coordinate of `coords`.
pub fn inr_forward(model: &InrModel, coords: &CoordGrid) -> Result<Vec<f64>> {
    Ok(model.forward(&coords.to_tensor())?.0.into_data())
}

#[derive(Debug, Clone)]
pub struct InrFit {
    pub model: InrModel,
    /// Loss before each parameter update; `history[e - 1]` is epoch `e`.
    pub history: Vec<f64>,
    /// Loss of the fitted model.
    pub final_loss: f64,
    /// Output of the fitted model on the training grid.
    pub fitted: GridField,
}

/// Full-batch Adam on the MSE between the network and `field`, one step per
/// epoch. `field` should already be normalized.
pub fn fit_inr(field: &GridField, config: &InrConfig, seed: u64) -> Result<InrFit> {
    let mut model = InrModel::init(config, &mut rng::stream(seed, STREAM_INIT))?;
    let coords = make_coord_grid(field.height(), field.width())?.to_tensor();
    let target = field.values();
    let n = target.len() as f64;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), model.param_count())?;
    let mut history = Vec::with_capacity(config.epochs);
    let mse_and_grad = |y: &Tensor| {
        let mut loss = 0.0;
        let grad: Vec<f64> = y
            .data()
            .iter()
            .zip(target)
            .map(|(p, t)| {
                let d = p - t;
                loss += d * d;
                2.0 * d / n
            })
            .collect();
        (loss / n, grad)
    };
    for epoch in 1..=config.epochs {
        let (y, cache) = model.forward(&coords)?;
        let (loss, grad) = mse_and_grad(&y);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
        let grads = model.backward(&cache, &Tensor::new(y.shape(), grad)?)?;
        let mut params = model.params();
        adam.step(&mut params, &grads.params)?;
        model.set_params(&params)?;
        if epoch % 250 == 0 {
            log::debug!("inr {} epoch {epoch}: loss {loss:.6e}", model.activation);
        }
    }
    let (y, _) = model.forward(&coords)?;
    let (final_loss, _) = mse_and_grad(&y);
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs + 1,
            loss: final_loss,
        });
    }
    let fitted = field.derive(field.height(), field.width(), y.into_data())?;
    Ok(InrFit {
        model,
        history,
        final_loss,
        fitted,
    })
}

/// Evaluates the model on an `h_out x w_out` pixel-center grid and maps the
/// result back to raw units.
pub fn sample_inr(model: &InrModel, h_out: usize, w_out: usize, stats: &NormStats) -> Result<GridField> {
    let values = inr_forward(model, &make_coord_grid(h_out, w_out)?)?;
    denormalize(&GridField::new(h_out, w_out, values)?, stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InrComparisonRow {
    pub activation: ActivationKind,
    pub report: MetricReport,
    pub seconds: f64,
}

/// Fits one INR per config on `lr_field`, samples each at the dimensions of
/// `hr_field` and scores it there. Both fields are normalized with the range
/// of `lr_field`; scores use peak 1 in those units. Rows are sorted by PSNR,
/// best first.
pub fn compare_inr_activations(
    lr_field: &GridField,
    hr_field: &GridField,
    configs: &[InrConfig],
    seed: u64,
) -> Result<Vec<InrComparisonRow>> {
    let (lh, lw) = lr_field.dims();
    let (hh, hw) = hr_field.dims();
    if hh % lh != 0 || hw % lw != 0 || hh / lh != hw / lw {
        return Err(Error::ShapeMismatch(format!(
            "high-resolution {hh}x{hw} is not a uniform multiple of {lh}x{lw}"
        )));
    }
    let stats = NormStats::from_fields([lr_field])?;
    let lr = normalize(lr_field, &stats)?;
    let hr = normalize(hr_field, &stats)?;
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let start = Instant::now();
        let fit = fit_inr(&lr, config, seed)?;
        let values = inr_forward(&fit.model, &make_coord_grid(hh, hw)?)?;
        let seconds = start.elapsed().as_secs_f64();
        let pred = hr.derive(hh, hw, values)?;
        let report = MetricReport::compute(&pred, &hr, DEFAULT_PEAK)?;
        log::info!("inr {}: {report} ({seconds:.1}s)", config.activation);
        rows.push(InrComparisonRow {
            activation: config.activation,
            report,
            seconds,
        });
    }
    rows.sort_by(|a, b| b.report.psnr_db.total_cmp(&a.report.psnr_db));
    Ok(rows)
}

/// `activation,mse,psnr,ssim,seconds` CSV.
pub fn comparison_csv(rows: &[InrComparisonRow]) -> String {
    let mut out = String::from("activation,mse,psnr,ssim,seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.activation.name(),
            r.report.mse,
            r.report.psnr_db,
            r.report.ssim,
            r.seconds
        ));
    }
    out
}
