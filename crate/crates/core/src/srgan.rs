//! Adversarial training with the refinement network as generator.
//!
//! The discriminator is a stack of 3x3 stride-2 convolutions with ReLU,
//! global average pooling and one dense unit producing a logit. Each batch
//! runs one discriminator step followed by one generator step.

use crate::datagen::{PairDataset, Split};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::metrics::{perceptual_loss, DEFAULT_ADVERSARIAL_WEIGHT};
use crate::nn::{
    Activation, ActivationKind, AdamConfig, AdamState, Checkpoint, ConvLayer, DenseLayer, Differentiable,
    Gradients, InitScheme, LayerRecord, Tensor,
};
use crate::rng::{self, Rng};
use crate::srcnn::{
    epoch_batches, field_to_tensor, prepare, validate_hyper, SrcnnConfig, SrcnnModel, TrainHyper,
    STREAM_BATCHES, STREAM_GENERATOR_INIT,
};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

const STREAM_DISCRIMINATOR_INIT: &str = "discriminator.init";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub n_conv_layers: usize,
    /// Channels of the first layer; doubled by every following layer.
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            n_conv_layers: 4,
            base_channels: 32,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_conv_layers == 0 || self.base_channels == 0 {
            return Err(Error::InvalidConfig(
                "discriminator needs at least one layer and one channel".into(),
            ));
        }
        if self.n_conv_layers > 16 {
            return Err(Error::InvalidConfig(format!("{} discriminator layers", self.n_conv_layers)));
        }
        Ok(())
    }

    /// Inputs must be divisible by this in both dimensions.
    pub fn divisor(&self) -> usize {
        1 << self.n_conv_layers
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        let d = self.divisor();
        if height % d != 0 || width % d != 0 {
            return Err(Error::NotDivisible { height, width, factor: d });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub convs: Vec<ConvLayer>,
    pub head: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache {
    convs: Vec<(Tensor, Vec<f64>)>,
    /// Shape of the last feature map.
    pooled_from: Vec<usize>,
    pooled: Tensor,
}

impl Discriminator {
    pub fn init(config: DiscriminatorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::with_capacity(config.n_conv_layers);
        let mut in_c = 1;
        for i in 0..config.n_conv_layers {
            let out_c = config.base_channels << i;
            convs.push(ConvLayer::init(in_c, out_c, 3, 2, InitScheme::HeUniform, rng)?);
            in_c = out_c;
        }
        let head = DenseLayer::init(in_c, 1, InitScheme::FanInUniform, InitScheme::Zeros, rng);
        Ok(Self { convs, head })
    }

    pub fn config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            n_conv_layers: self.convs.len(),
            base_channels: self.convs[0].out_channels(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers: Vec<LayerRecord> = self.convs.iter().cloned().map(LayerRecord::Conv).collect();
        layers.push(LayerRecord::Dense(self.head.clone()));
        let mut ck = Checkpoint {
            layers,
            metadata: Vec::new(),
        };
        ck.set_meta("model", "discriminator");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model") != Some("discriminator") {
            return Err(Error::InvalidCheckpoint("expected a discriminator checkpoint".into()));
        }
        let (last, convs) = ck
            .layers
            .split_last()
            .ok_or_else(|| Error::InvalidCheckpoint("no layers".into()))?;
        let head = match last {
            LayerRecord::Dense(d) if !d.complex_valued() && d.outputs() == 1 => d.clone(),
            _ => return Err(Error::InvalidCheckpoint("discriminator head must be dense 1-output".into())),
        };
        let convs: Vec<ConvLayer> = convs
            .iter()
            .map(|l| match l {
                LayerRecord::Conv(c) if c.stride == 2 => Ok(c.clone()),
                _ => Err(Error::InvalidCheckpoint("discriminator body must be stride-2 convs".into())),
            })
            .collect::<Result<_>>()?;
        if convs.is_empty() {
            return Err(Error::InvalidCheckpoint("discriminator has no conv layers".into()));
        }
        Ok(Self { convs, head })
    }
}

fn relu() -> Activation {
    Activation { kind: ActivationKind::Relu }
}

impl Differentiable for Discriminator {
    type Cache = DiscriminatorCache;

    /// `[h, w, 1]` in, a single logit `[1, 1]` out.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, DiscriminatorCache)> {
        let mut convs = Vec::with_capacity(self.convs.len());
        let mut a = x.clone();
        for c in &self.convs {
            let (z, cache) = c.forward(&a)?;
            let (y, d) = relu().apply_real(&z)?;
            convs.push((cache, d));
            a = y;
        }
        let s = a.shape().to_vec();
        let channels = s[2];
        let pixels = (s[0] * s[1]) as f64;
        let mut pooled = vec![0.0; channels];
        for px in a.data().chunks(channels) {
            for (p, v) in pooled.iter_mut().zip(px) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= pixels);
        let pooled = Tensor::new(&[1, channels], pooled)?;
        let logit = self.head.forward_real(&pooled)?;
        Ok((
            logit,
            DiscriminatorCache {
                convs,
                pooled_from: s,
                pooled,
            },
        ))
    }

    fn backward(&self, cache: &DiscriminatorCache, grad_out: &Tensor) -> Result<Gradients> {
        let gh = self.head.backward_real(&cache.pooled, grad_out)?;
        let s = &cache.pooled_from;
        let pixels = (s[0] * s[1]) as f64;
        let per_pixel: Vec<f64> = gh.input.data().iter().map(|g| g / pixels).collect();
        let mut g = Tensor::new(s, per_pixel.repeat(s[0] * s[1]))?;
        let mut conv_params = Vec::with_capacity(self.convs.len());
        for (c, (conv_cache, d)) in self.convs.iter().zip(&cache.convs).rev() {
            let gz = Activation::backward_real(d, &g);
            let gc = c.backward(conv_cache, &gz)?;
            conv_params.push(gc.params);
            g = gc.input;
        }
        let mut params = Vec::with_capacity(self.param_count());
        for p in conv_params.into_iter().rev() {
            params.extend(p);
        }
        params.extend(gh.params);
        Ok(Gradients { params, input: g })
    }

    fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.param_count()).sum::<usize>() + self.head.param_count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.convs.iter().flat_map(|c| c.params()).collect();
        p.extend(self.head.params());
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("discriminator parameter count".into()));
        }
        let mut offset = 0;
        for c in &mut self.convs {
            let n = c.param_count();
            c.set_params(&params[offset..offset + n])?;
            offset += n;
        }
        self.head.set_params(&params[offset..])
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that `field` is a real high-resolution field.
pub fn discriminate(d: &Discriminator, field: &GridField) -> Result<f64> {
    d.config().check_dims(field.height(), field.width())?;
    let (logit, _) = d.forward(&field_to_tensor(field))?;
    Ok(sigmoid(logit.data()[0]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Generator objective on the discriminator's verdict for a fake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorLoss {
    /// `-ln p_fake`
    #[default]
    NonSaturating,
    /// `ln(1 - p_fake)`; flat exactly when the discriminator is confident.
    Saturating,
}

impl GeneratorLoss {
    pub fn value(self, p_fake: f64) -> f64 {
        let p = clamp_prob(p_fake);
        match self {
            GeneratorLoss::NonSaturating => -p.ln(),
            GeneratorLoss::Saturating => (1.0 - p).ln(),
        }
    }

    /// Derivative with respect to the fake logit.
    fn logit_grad(self, p_fake: f64) -> f64 {
        match self {
            GeneratorLoss::NonSaturating => p_fake - 1.0,
            GeneratorLoss::Saturating => -p_fake,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "non-saturating" | "nonsaturating" => Ok(Self::NonSaturating),
            "saturating" => Ok(Self::Saturating),
            other => Err(Error::InvalidConfig(format!("unknown generator loss {other:?}"))),
        }
    }
}

/// `(d_loss, g_loss)` with `d_loss = -[ln p_real + ln(1 - p_fake)] / 2` and
/// the non-saturating `g_loss = -ln p_fake`.
pub fn adversarial_losses(p_real: f64, p_fake: f64) -> (f64, f64) {
    let (r, f) = (clamp_prob(p_real), clamp_prob(p_fake));
    (-(r.ln() + (1.0 - f).ln()) / 2.0, GeneratorLoss::NonSaturating.value(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrganHyper {
    /// Generator schedule, optimizer and content loss.
    pub generator: TrainHyper,
    pub discriminator_adam: AdamConfig,
    pub adversarial_weight: f64,
    pub generator_loss: GeneratorLoss,
}

impl Default for SrganHyper {
    fn default() -> Self {
        Self {
            generator: TrainHyper::default(),
            discriminator_adam: AdamConfig::with_lr(AdamConfig::CONV_LR),
            adversarial_weight: DEFAULT_ADVERSARIAL_WEIGHT,
            generator_loss: GeneratorLoss::NonSaturating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEpochRecord {
    pub epoch: usize,
    pub content_loss: f64,
    pub g_adv_loss: f64,
    pub d_loss: f64,
    /// Fraction of real and generated fields classified correctly.
    pub d_accuracy: f64,
}

/// `epoch,content_loss,g_adv_loss,d_loss,d_accuracy` CSV.
pub fn gan_history_csv(history: &[GanEpochRecord]) -> String {
    let mut out = String::from("epoch,content_loss,g_adv_loss,d_loss,d_accuracy\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.content_loss, r.g_adv_loss, r.d_loss, r.d_accuracy
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SrganOutput {
    pub generator: SrcnnModel,
    pub discriminator: Discriminator,
    pub history: Vec<GanEpochRecord>,
}

fn add_scaled(acc: &mut [f64], grads: &[f64]) {
    for (a, g) in acc.iter_mut().zip(grads) {
        *a += g;
    }
}

fn logit_tensor(g: f64) -> Tensor {
    Tensor::new(&[1, 1], vec![g]).expect("scalar")
}

pub fn train_srgan(
    dataset: &PairDataset,
    g_config: SrcnnConfig,
    d_config: DiscriminatorConfig,
    hyper: &SrganHyper,
    seed: u64,
) -> Result<SrganOutput> {
    validate_hyper(&hyper.generator)?;
    hyper.discriminator_adam.validate()?;
    perceptual_loss(0.0, 0.0, hyper.adversarial_weight)?;
    d_config.validate()?;
    let train = prepare(dataset, Split::Train)?;
    if train.inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (h, w) = (train.height, train.width);
    d_config.check_dims(h, w)?;

    let mut generator = SrcnnModel::init(g_config, &mut rng::stream(seed, STREAM_GENERATOR_INIT))?;
    generator.stats = Some(dataset.stats);
    generator.factor = Some(dataset.factor);
    let mut discriminator = Discriminator::init(d_config, &mut rng::stream(seed, STREAM_DISCRIMINATOR_INIT))?;
    let mut g_adam = AdamState::new(hyper.generator.adam, generator.param_count())?;
    let mut d_adam = AdamState::new(hyper.discriminator_adam, discriminator.param_count())?;
    let mut batch_rng = rng::stream(seed, STREAM_BATCHES);
    let content = hyper.generator.loss;
    let weight = hyper.adversarial_weight;
    let n = train.inputs.len() as f64;

    let mut history = Vec::with_capacity(hyper.generator.epochs);
    for epoch in 1..=hyper.generator.epochs {
        let (mut content_sum, mut g_adv_sum, mut d_sum, mut correct) = (0.0, 0.0, 0.0, 0usize);
        for batch in epoch_batches(train.inputs.len(), hyper.generator.batch_size, &mut batch_rng) {
            let scale = 1.0 / batch.len() as f64;
            let fakes = batch
                .iter()
                .map(|&i| generator.forward(&train.inputs[i]))
                .collect::<Result<Vec<_>>>()?;

            // Discriminator step on real targets and the current fakes.
            let mut d_grads = vec![0.0; discriminator.param_count()];
            for (&i, (fake, _)) in batch.iter().zip(&fakes) {
                let (lr, cr) = discriminator.forward(&train.targets[i])?;
                let (lf, cf) = discriminator.forward(fake)?;
                let (pr, pf) = (sigmoid(lr.data()[0]), sigmoid(lf.data()[0]));
                let (d_loss, _) = adversarial_losses(pr, pf);
                if !d_loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss: d_loss });
                }
                d_sum += d_loss;
                correct += usize::from(pr > 0.5) + usize::from(pf < 0.5);
                let gr = discriminator.backward(&cr, &logit_tensor(0.5 * (pr - 1.0) * scale))?;
                add_scaled(&mut d_grads, &gr.params);
                let gf = discriminator.backward(&cf, &logit_tensor(0.5 * pf * scale))?;
                add_scaled(&mut d_grads, &gf.params);
            }
            let mut d_params = discriminator.params();
            d_adam.step(&mut d_params, &d_grads)?;
            discriminator.set_params(&d_params)?;

            // Generator step against the updated discriminator.
            let mut g_grads = vec![0.0; generator.param_count()];
            for (&i, (fake, cache)) in batch.iter().zip(&fakes) {
                let (l, g) = content.value_and_grad(fake.data(), train.targets[i].data(), h, w)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                content_sum += l;
                let mut g = Tensor::new(fake.shape(), g.into_iter().map(|v| v * scale).collect())?;
                let (lf, cf) = discriminator.forward(fake)?;
                let pf = sigmoid(lf.data()[0]);
                g_adv_sum += hyper.generator_loss.value(pf);
                if weight != 0.0 {
                    let dl = hyper.generator_loss.logit_grad(pf) * weight * scale;
                    let adv = discriminator.backward(&cf, &logit_tensor(dl))?;
                    g.add_assign(&adv.input)?;
                }
                add_scaled(&mut g_grads, &generator.backward(cache, &g)?.params);
            }
            let mut g_params = generator.params();
            g_adam.step(&mut g_params, &g_grads)?;
            generator.set_params(&g_params)?;
        }
        let record = GanEpochRecord {
            epoch,
            content_loss: content_sum / n,
            g_adv_loss: g_adv_sum / n,
            d_loss: d_sum / n,
            d_accuracy: correct as f64 / (2.0 * n),
        };
        let total = perceptual_loss(record.content_loss, record.g_adv_loss, weight)?;
        if !total.is_finite() {
            return Err(Error::Diverged { epoch, loss: total });
        }
        log::info!(
            "srgan epoch {epoch}: content {:.6e} g_adv {:.4} d {:.4} acc {:.3}",
            record.content_loss,
            record.g_adv_loss,
            record.d_loss,
            record.d_accuracy
        );
        history.push(record);
    }
    Ok(SrganOutput {
        generator,
        discriminator,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discriminator_is_undecided() {
        let mut d = Discriminator::init(DiscriminatorConfig::default(), &mut rng::stream(0, "t")).unwrap();
        let n = d.param_count();
        d.set_params(&vec![0.0; n]).unwrap();
        let f = GridField::from_fn(16, 32, |i, j| (i + j) as f64 / 48.0).unwrap();
        assert_eq!(discriminate(&d, &f).unwrap(), 0.5);
    }

    #[test]
    fn rejects_indivisible_input() {
        let d = Discriminator::init(DiscriminatorConfig::default(), &mut rng::stream(0, "t")).unwrap();
        let f = GridField::filled(12, 16, 0.3).unwrap();
        assert!(matches!(discriminate(&d, &f), Err(Error::NotDivisible { factor: 16, .. })));
    }

    #[test]
    fn loss_closed_forms() {
        let (d, g) = adversarial_losses(0.5, 0.5);
        assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g - std::f64::consts::LN_2).abs() < 1e-12);
        let (d, _) = adversarial_losses(0.9, 0.1);
        assert!((d + 0.9f64.ln()).abs() < 1e-12);
        let (_, g) = adversarial_losses(0.3, 1.0);
        assert!(g.abs() < 1e-11);
        let (d, g) = adversarial_losses(0.0, 1.0);
        assert!(d.is_finite() && g.is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = Discriminator::init(
            DiscriminatorConfig {
                n_conv_layers: 2,
                base_channels: 3,
            },
            &mut rng::stream(4, "t"),
        )
        .unwrap();
        let ck = Checkpoint::from_bytes(&d.to_checkpoint().to_bytes()).unwrap();
        assert_eq!(Discriminator::from_checkpoint(&ck).unwrap(), d);
    }
}
