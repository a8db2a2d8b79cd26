//! Convolutional refinement of a bicubic pre-upscale.
//!
//! ```text
//! x ─┬─ conv(feature) ─ relu ─ [residual block] x n ─ conv(map) ─ relu ─ conv(reconstruct) ─ + ─ y
//!    └──────────────────────────────────────────────────────────────────────────────────────┘
//! residual block: b ─┬─ conv ─ relu ─ conv ─ + ─
//!                    └────────────────────────┘
//! ```
//!
//! With no residual blocks this is the classic three-layer network (patch
//! extraction, non-linear mapping, reconstruction). The global skip makes an
//! all-zero network the identity, so a fresh model with a zeroed
//! reconstruction layer starts out as plain bicubic interpolation.

use rand::seq::SliceRandom;

use crate::datagen::{PairDataset, Split};
use crate::error::{Error, Result};
use crate::grid::{denormalize, normalize, GridField, NormStats};
use crate::metrics::{LossKind, MetricReport, DEFAULT_PEAK};
use crate::nn::{
    Activation, ActivationKind, AdamConfig, AdamState, Checkpoint, ConvLayer, Differentiable, Gradients,
    InitScheme, LayerRecord, Tensor,
};
use crate::resample::{bicubic_upscale, ResampleFactor};
use crate::rng::{self, Rng};

/// Accepted range for normalized model inputs.
pub const INPUT_RANGE: (f64, f64) = (-0.5, 1.5);

/// Stream names shared with adversarial training so both consume identical
/// randomness for the generator.
pub(crate) const STREAM_GENERATOR_INIT: &str = "generator.init";
pub(crate) const STREAM_BATCHES: &str = "train.batches";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SrcnnConfig {
    pub feature_kernel: usize,
    pub map_kernel: usize,
    pub reconstruct_kernel: usize,
    pub feature_channels: usize,
    pub map_channels: usize,
    pub n_residual_blocks: usize,
    pub residual_kernel: usize,
}

impl Default for SrcnnConfig {
    fn default() -> Self {
        Self {
            feature_kernel: 9,
            map_kernel: 5,
            reconstruct_kernel: 5,
            feature_channels: 64,
            map_channels: 32,
            n_residual_blocks: 4,
            residual_kernel: 3,
        }
    }
}

impl SrcnnConfig {
    pub fn validate(&self) -> Result<()> {
        let kernels = [self.feature_kernel, self.map_kernel, self.reconstruct_kernel, self.residual_kernel];
        if kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidConfig(format!("kernels must be odd: {kernels:?}")));
        }
        if self.feature_channels == 0 || self.map_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// `b + conv2(relu(conv1(b)))`
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct ResidualCache {
    conv1: Tensor,
    relu: Vec<f64>,
    conv2: Tensor,
}

fn relu() -> Activation {
    Activation { kind: ActivationKind::Relu }
}

impl Differentiable for ResidualBlock {
    type Cache = ResidualCache;

    fn forward(&self, x: &Tensor) -> Result<(Tensor, ResidualCache)> {
        let (z, c1) = self.conv1.forward(x)?;
        let (a, relu_d) = relu().apply_real(&z)?;
        let (mut y, c2) = self.conv2.forward(&a)?;
        y.add_assign(x)?;
        Ok((
            y,
            ResidualCache {
                conv1: c1,
                relu: relu_d,
                conv2: c2,
            },
        ))
    }

    fn backward(&self, cache: &ResidualCache, grad_out: &Tensor) -> Result<Gradients> {
        let g2 = self.conv2.backward(&cache.conv2, grad_out)?;
        let ga = Activation::backward_real(&cache.relu, &g2.input);
        let g1 = self.conv1.backward(&cache.conv1, &ga)?;
        let mut input = g1.input;
        input.add_assign(grad_out)?;
        let mut params = g1.params;
        params.extend(g2.params);
        Ok(Gradients { params, input })
    }

    fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.conv1.params();
        p.extend(self.conv2.params());
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n1 = self.conv1.param_count();
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("residual block parameter count".into()));
        }
        self.conv1.set_params(&params[..n1])?;
        self.conv2.set_params(&params[n1..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrcnnModel {
    pub config: SrcnnConfig,
    pub feature: ConvLayer,
    pub blocks: Vec<ResidualBlock>,
    pub map: ConvLayer,
    pub reconstruct: ConvLayer,
    /// Normalization used in training; required for raw-unit upscaling.
    pub stats: Option<NormStats>,
    /// Upscale factor the model was trained for.
    pub factor: Option<ResampleFactor>,
}

#[derive(Debug, Clone)]
pub struct SrcnnCache {
    feature: Tensor,
    feature_relu: Vec<f64>,
    blocks: Vec<ResidualCache>,
    map: Tensor,
    map_relu: Vec<f64>,
    reconstruct: Tensor,
}

impl SrcnnModel {
    /// Fresh model: He-uniform convolutions and a zero reconstruction layer.
    pub fn init(config: SrcnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let f = config.feature_channels;
        let feature = ConvLayer::init(1, f, config.feature_kernel, 1, InitScheme::HeUniform, rng)?;
        let blocks = (0..config.n_residual_blocks)
            .map(|_| {
                Ok(ResidualBlock {
                    conv1: ConvLayer::init(f, f, config.residual_kernel, 1, InitScheme::HeUniform, rng)?,
                    conv2: ConvLayer::init(f, f, config.residual_kernel, 1, InitScheme::HeUniform, rng)?,
                })
            })
            .collect::<Result<_>>()?;
        let map = ConvLayer::init(f, config.map_channels, config.map_kernel, 1, InitScheme::HeUniform, rng)?;
        let reconstruct =
            ConvLayer::init(config.map_channels, 1, config.reconstruct_kernel, 1, InitScheme::Zeros, rng)?;
        Ok(Self {
            config,
            feature,
            blocks,
            map,
            reconstruct,
            stats: None,
            factor: None,
        })
    }

    /// Every weight and bias zero.
    pub fn zeros(config: SrcnnConfig) -> Result<Self> {
        let mut m = Self::init(config, &mut rng::stream(0, "zeros"))?;
        let n = m.param_count();
        m.set_params(&vec![0.0; n])?;
        Ok(m)
    }

    fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        std::iter::once(&self.feature)
            .chain(self.blocks.iter().flat_map(|b| [&b.conv1, &b.conv2]))
            .chain([&self.map, &self.reconstruct])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            layers: self.layers().cloned().map(LayerRecord::Conv).collect(),
            metadata: Vec::new(),
        };
        ck.set_meta("model", "srcnn");
        ck.set_meta("n_residual_blocks", self.config.n_residual_blocks);
        if let Some(s) = self.stats {
            ck.set_meta("norm_min", s.min_val);
            ck.set_meta("norm_max", s.max_val);
        }
        if let Some(f) = self.factor {
            ck.set_meta("factor", f.get());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model") != Some("srcnn") {
            return Err(Error::InvalidCheckpoint(format!(
                "expected an srcnn checkpoint, found {:?}",
                ck.meta("model")
            )));
        }
        let convs: Vec<ConvLayer> = ck
            .layers
            .iter()
            .map(|l| match l {
                LayerRecord::Conv(c) if c.stride == 1 => Ok(c.clone()),
                _ => Err(Error::InvalidCheckpoint("srcnn layers must be stride-1 convolutions".into())),
            })
            .collect::<Result<_>>()?;
        if convs.len() < 3 || convs.len() % 2 == 0 {
            return Err(Error::InvalidCheckpoint(format!("{} layers", convs.len())));
        }
        let n_blocks = (convs.len() - 3) / 2;
        let feature = convs[0].clone();
        let map = convs[convs.len() - 2].clone();
        let reconstruct = convs[convs.len() - 1].clone();
        let blocks: Vec<ResidualBlock> = convs[1..convs.len() - 2]
            .chunks(2)
            .map(|c| ResidualBlock {
                conv1: c[0].clone(),
                conv2: c[1].clone(),
            })
            .collect();
        let f = feature.out_channels();
        let config = SrcnnConfig {
            feature_kernel: feature.kernel().0,
            map_kernel: map.kernel().0,
            reconstruct_kernel: reconstruct.kernel().0,
            feature_channels: f,
            map_channels: map.out_channels(),
            n_residual_blocks: n_blocks,
            residual_kernel: blocks.first().map_or(3, |b| b.conv1.kernel().0),
        };
        let chained = feature.in_channels() == 1
            && blocks.iter().all(|b| {
                [&b.conv1, &b.conv2]
                    .iter()
                    .all(|c| c.in_channels() == f && c.out_channels() == f)
            })
            && map.in_channels() == f
            && reconstruct.in_channels() == map.out_channels()
            && reconstruct.out_channels() == 1;
        if !chained {
            return Err(Error::InvalidCheckpoint("srcnn channel counts do not chain".into()));
        }
        let meta_f64 = |k: &str| -> Result<Option<f64>> {
            ck.meta(k)
                .map(|v| v.parse::<f64>().map_err(|e| Error::InvalidCheckpoint(format!("{k}: {e}"))))
                .transpose()
        };
        let stats = match (meta_f64("norm_min")?, meta_f64("norm_max")?) {
            (Some(lo), Some(hi)) => Some(NormStats::new(lo, hi)?),
            _ => None,
        };
        let factor = ck
            .meta("factor")
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|e| Error::InvalidCheckpoint(format!("factor: {e}")))
                    .and_then(ResampleFactor::new)
            })
            .transpose()?;
        Ok(Self {
            config,
            feature,
            blocks,
            map,
            reconstruct,
            stats,
            factor,
        })
    }
}

impl Differentiable for SrcnnModel {
    type Cache = SrcnnCache;

    /// `[h, w, 1]` in, `[h, w, 1]` out.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, SrcnnCache)> {
        let (z, feature) = self.feature.forward(x)?;
        let (mut a, feature_relu) = relu().apply_real(&z)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&a)?;
            blocks.push(c);
            a = y;
        }
        let (z, map) = self.map.forward(&a)?;
        let (a, map_relu) = relu().apply_real(&z)?;
        let (mut y, reconstruct) = self.reconstruct.forward(&a)?;
        y.add_assign(x)?;
        Ok((
            y,
            SrcnnCache {
                feature,
                feature_relu,
                blocks,
                map,
                map_relu,
                reconstruct,
            },
        ))
    }

    fn backward(&self, cache: &SrcnnCache, grad_out: &Tensor) -> Result<Gradients> {
        let gr = self.reconstruct.backward(&cache.reconstruct, grad_out)?;
        let g = Activation::backward_real(&cache.map_relu, &gr.input);
        let gm = self.map.backward(&cache.map, &g)?;
        let mut g = gm.input;
        let mut block_params = Vec::with_capacity(self.blocks.len());
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let gb = b.backward(c, &g)?;
            block_params.push(gb.params);
            g = gb.input;
        }
        let g = Activation::backward_real(&cache.feature_relu, &g);
        let gf = self.feature.backward(&cache.feature, &g)?;
        let mut input = gf.input;
        input.add_assign(grad_out)?;

        let mut params = Vec::with_capacity(self.param_count());
        params.extend(gf.params);
        for p in block_params.into_iter().rev() {
            params.extend(p);
        }
        params.extend(gm.params);
        params.extend(gr.params);
        Ok(Gradients { params, input })
    }

    fn param_count(&self) -> usize {
        self.layers().map(|l| l.param_count()).sum()
    }

    fn params(&self) -> Vec<f64> {
        self.layers().flat_map(|l| l.params()).collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        let mut take = |layer: &mut ConvLayer| {
            let n = layer.param_count();
            let r = layer.set_params(&params[offset..offset + n]);
            offset += n;
            r
        };
        take(&mut self.feature)?;
        for b in &mut self.blocks {
            take(&mut b.conv1)?;
            take(&mut b.conv2)?;
        }
        take(&mut self.map)?;
        take(&mut self.reconstruct)
    }
}

pub(crate) fn field_to_tensor(field: &GridField) -> Tensor {
    Tensor::new(&[field.height(), field.width(), 1], field.values().to_vec()).expect("field dims are positive")
}

fn check_range(field: &GridField) -> Result<()> {
    let (lo, hi) = INPUT_RANGE;
    match field.values().iter().position(|v| !(lo..=hi).contains(v)) {
        Some(index) => Err(Error::InputOutOfRange {
            index,
            value: field.values()[index],
        }),
        None => Ok(()),
    }
}

/// Refines an already upscaled, normalized field.
pub fn srcnn_forward(model: &SrcnnModel, lr_upscaled: &GridField) -> Result<GridField> {
    check_range(lr_upscaled)?;
    let (y, _) = model.forward(&field_to_tensor(lr_upscaled))?;
    lr_upscaled.derive(lr_upscaled.height(), lr_upscaled.width(), y.into_data())
}

/// Raw units in, raw units out: normalize, bicubic upscale, refine,
/// denormalize.
pub fn upscale_srcnn(model: &SrcnnModel, field: &GridField, factor: ResampleFactor) -> Result<GridField> {
    let stats = model.stats.ok_or(Error::MissingNormStats)?;
    let up = bicubic_upscale(&normalize(field, &stats)?, factor)?;
    denormalize(&srcnn_forward(model, &up)?, &stats)
}

/// Result of iterated refinement.
#[derive(Debug, Clone)]
pub struct AutoregressOutput {
    /// Final iterate in raw units.
    pub field: GridField,
    /// One report per iteration, in normalized units. Against `truth` when
    /// given, otherwise against the previous iterate (the bicubic upscale for
    /// the first iteration).
    pub reports: Vec<MetricReport>,
}

/// Bicubic upscale once, then apply the network `k` times at the target
/// resolution. `k = 1` is exactly [`upscale_srcnn`].
pub fn autoregress(
    model: &SrcnnModel,
    field: &GridField,
    factor: ResampleFactor,
    k: usize,
    truth: Option<&GridField>,
) -> Result<AutoregressOutput> {
    if k == 0 {
        return Err(Error::InvalidConfig("iteration count must be >= 1".into()));
    }
    let stats = model.stats.ok_or(Error::MissingNormStats)?;
    let truth = truth.map(|t| normalize(t, &stats)).transpose()?;
    let mut current = bicubic_upscale(&normalize(field, &stats)?, factor)?;
    if let Some(t) = &truth {
        current.ensure_same_dims(t)?;
    }
    let mut reports = Vec::with_capacity(k);
    for iteration in 1..=k {
        let next = match srcnn_forward(model, &current) {
            Ok(f) => f,
            Err(Error::InputOutOfRange { .. }) | Err(Error::NonFinite { .. }) if iteration > 1 => {
                return Err(Error::NonFiniteIterate { iteration });
            }
            Err(e) => return Err(e),
        };
        let reference = truth.as_ref().unwrap_or(&current);
        let report = MetricReport::compute(&next, reference, DEFAULT_PEAK)?;
        if !report.is_finite() && truth.is_some() {
            return Err(Error::NonFiniteIterate { iteration });
        }
        reports.push(report);
        current = next;
    }
    Ok(AutoregressOutput {
        field: denormalize(&current, &stats)?,
        reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossKind,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            adam: AdamConfig::with_lr(AdamConfig::CONV_LR),
            loss: LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `NaN` when the dataset has no validation split.
    pub val_loss: f64,
}

/// `epoch,train_loss,val_loss` CSV.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    out
}

/// Normalized, bicubic-upscaled inputs and normalized targets for one split.
pub(crate) struct Prepared {
    pub inputs: Vec<Tensor>,
    pub targets: Vec<Tensor>,
    pub height: usize,
    pub width: usize,
}

pub(crate) fn prepare(dataset: &PairDataset, split: Split) -> Result<Prepared> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let (mut height, mut width) = (0, 0);
    for pair in dataset.subset(split) {
        let up = bicubic_upscale(&normalize(&pair.lr, &dataset.stats)?, dataset.factor)?;
        let target = normalize(&pair.hr, &dataset.stats)?;
        up.ensure_same_dims(&target)?;
        (height, width) = target.dims();
        inputs.push(field_to_tensor(&up));
        targets.push(field_to_tensor(&target));
    }
    Ok(Prepared {
        inputs,
        targets,
        height,
        width,
    })
}

/// A fresh permutation split into batches.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Mean loss of the model over a prepared split.
pub(crate) fn evaluate_loss(model: &SrcnnModel, data: &Prepared, loss: LossKind) -> Result<f64> {
    if data.inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let (y, _) = model.forward(x)?;
        total += loss.value_and_grad(y.data(), t.data(), data.height, data.width)?.0;
    }
    Ok(total / data.inputs.len() as f64)
}

pub(crate) fn validate_hyper(hyper: &TrainHyper) -> Result<()> {
    hyper.adam.validate()?;
    if hyper.epochs == 0 || hyper.batch_size == 0 {
        return Err(Error::InvalidConfig("epochs and batch size must be >= 1".into()));
    }
    Ok(())
}

/// Trains a model on the dataset's train split, scoring the val split after
/// every epoch.
pub fn train_srcnn(
    dataset: &PairDataset,
    config: SrcnnConfig,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<(SrcnnModel, Vec<EpochRecord>)> {
    validate_hyper(hyper)?;
    let train = prepare(dataset, Split::Train)?;
    if train.inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let val = prepare(dataset, Split::Val)?;
    let mut model = SrcnnModel::init(config, &mut rng::stream(seed, STREAM_GENERATOR_INIT))?;
    model.stats = Some(dataset.stats);
    model.factor = Some(dataset.factor);
    let mut adam = AdamState::new(hyper.adam, model.param_count())?;
    let mut batch_rng = rng::stream(seed, STREAM_BATCHES);
    let (h, w) = (train.height, train.width);

    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(train.inputs.len(), hyper.batch_size, &mut batch_rng) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = vec![0.0; model.param_count()];
            for &i in &batch {
                let (y, cache) = model.forward(&train.inputs[i])?;
                let (l, g) = hyper.loss.value_and_grad(y.data(), train.targets[i].data(), h, w)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                epoch_loss += l;
                let g = Tensor::new(y.shape(), g.into_iter().map(|v| v * scale).collect())?;
                for (acc, v) in grads.iter_mut().zip(model.backward(&cache, &g)?.params) {
                    *acc += v;
                }
            }
            let mut params = model.params();
            adam.step(&mut params, &grads)?;
            model.set_params(&params)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / train.inputs.len() as f64,
            val_loss: evaluate_loss(&model, &val, hyper.loss)?,
        };
        log::info!(
            "srcnn epoch {epoch}: train {:.6e} val {:.6e}",
            record.train_loss,
            record.val_loss
        );
        history.push(record);
    }
    Ok((model, history))
}

/// Mean loss of the model over one split of the dataset (`NaN` if empty).
pub fn split_loss(model: &SrcnnModel, dataset: &PairDataset, split: Split, loss: LossKind) -> Result<f64> {
    evaluate_loss(model, &prepare(dataset, split)?, loss)
}

/// Loss of plain bicubic upscaling over a split, for comparison with a
/// trained model.
pub fn bicubic_baseline_loss(dataset: &PairDataset, split: Split, loss: LossKind) -> Result<f64> {
    let data = prepare(dataset, split)?;
    if data.inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        total += loss.value_and_grad(x.data(), t.data(), data.height, data.width)?.0;
    }
    Ok(total / data.inputs.len() as f64)
}
