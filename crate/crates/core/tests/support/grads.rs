//! One finite-difference case per differentiable block, parameterized by seed.

use gridsr::inr::{make_coord_grid, InrConfig, InrModel};
use gridsr::nn::dense::pack_complex;
use gridsr::nn::{
    grad_check, Activation, ActivationKind, ComplexGabor, ComplexTensor, ConvLayer, DenseLayer, Differentiable,
    GradCheckReport, InitScheme, Tensor,
};
use gridsr::rng;
use gridsr::srcnn::{ResidualBlock, SrcnnConfig, SrcnnModel};
use gridsr::srgan::{Discriminator, DiscriminatorConfig};
use rand::Rng;

pub const TOL: f64 = 1e-5;

pub type Case = (&'static str, GradCheckReport);

fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, "gradient-inputs");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so no ReLU sits on its kink.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut t = uniform(shape, 0.1, 1.0, seed);
    let mut r = rng::stream(seed, "signs");
    for v in t.data_mut() {
        if r.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Gives every parameter a random nudge so zero-initialized biases and
/// layers are exercised too.
fn jitter<M: Differentiable>(model: &mut M, seed: u64, scale: f64) {
    let mut r = rng::stream(seed, "jitter");
    let p: Vec<f64> = model.params().iter().map(|v| v + scale * r.gen_range(-1.0..1.0)).collect();
    model.set_params(&p).unwrap();
}

fn check<M: Differentiable>(name: &'static str, model: &mut M, x: &Tensor) -> Case {
    (name, grad_check(model, x).unwrap())
}

pub fn dense(s: u64) -> Vec<Case> {
    let mut r = rng::stream(s, "dense");
    let mut real = DenseLayer::init(5, 3, InitScheme::FanInUniform, InitScheme::FanInUniform, &mut r);
    let mut complex = DenseLayer::init_complex(4, 3, InitScheme::FanInUniform, InitScheme::FanInUniform, &mut r);
    vec![
        check("dense", &mut real, &uniform(&[4, 5], -1.0, 1.0, s + 1)),
        check("complex dense", &mut complex, &uniform(&[2, 3, 4], -1.0, 1.0, s + 2)),
    ]
}

pub fn conv(s: u64) -> Vec<Case> {
    let mut r = rng::stream(s, "conv");
    let mut c1 = ConvLayer::init(2, 3, 3, 1, InitScheme::HeUniform, &mut r).unwrap();
    jitter(&mut c1, s + 1, 0.1);
    let mut c5 = ConvLayer::init(1, 2, 5, 1, InitScheme::HeUniform, &mut r).unwrap();
    let mut c2 = ConvLayer::init(2, 4, 3, 2, InitScheme::HeUniform, &mut r).unwrap();
    jitter(&mut c2, s + 4, 0.1);
    vec![
        check("conv 3x3", &mut c1, &uniform(&[6, 5, 2], -1.0, 1.0, s + 2)),
        check("conv 5x5", &mut c5, &uniform(&[4, 7, 1], -1.0, 1.0, s + 3)),
        check("conv stride 2", &mut c2, &uniform(&[8, 6, 2], -1.0, 1.0, s + 5)),
    ]
}

pub fn activations(s: u64) -> Vec<Case> {
    let mut gabor = ComplexGabor { omega0: 20.0, s0: 10.0 };
    let z = ComplexTensor::new(uniform(&[9], -0.15, 0.15, s + 4), uniform(&[9], -0.15, 0.15, s + 5)).unwrap();
    vec![
        check(
            "relu",
            &mut Activation::new(ActivationKind::Relu).unwrap(),
            &away_from_zero(&[3, 7], s + 1),
        ),
        check(
            "sine",
            &mut Activation::new(ActivationKind::sine()).unwrap(),
            &uniform(&[3, 7], -0.1, 0.1, s + 2),
        ),
        check(
            "gauss",
            &mut Activation::new(ActivationKind::gauss()).unwrap(),
            &uniform(&[3, 7], -0.2, 0.2, s + 3),
        ),
        check("complex gabor", &mut gabor, &pack_complex(&z)),
    ]
}

pub fn residual_block(s: u64) -> Vec<Case> {
    let mut r = rng::stream(s, "block");
    let mut block = ResidualBlock {
        conv1: ConvLayer::init(3, 3, 3, 1, InitScheme::HeUniform, &mut r).unwrap(),
        conv2: ConvLayer::init(3, 3, 3, 1, InitScheme::HeUniform, &mut r).unwrap(),
    };
    jitter(&mut block, s + 1, 0.05);
    vec![check("residual block", &mut block, &uniform(&[5, 6, 3], -1.0, 1.0, s + 2))]
}

pub fn discriminator(s: u64) -> Vec<Case> {
    let config = DiscriminatorConfig {
        n_conv_layers: 3,
        base_channels: 2,
    };
    let mut d = Discriminator::init(config, &mut rng::stream(s, "d")).unwrap();
    jitter(&mut d, s + 1, 0.05);
    vec![check("discriminator", &mut d, &uniform(&[8, 8, 1], 0.0, 1.0, s + 2))]
}

pub fn srcnn(s: u64) -> Vec<Case> {
    let config = SrcnnConfig {
        feature_kernel: 5,
        map_kernel: 3,
        reconstruct_kernel: 3,
        feature_channels: 4,
        map_channels: 3,
        n_residual_blocks: 2,
        residual_kernel: 3,
    };
    let mut m = SrcnnModel::init(config, &mut rng::stream(s, "g")).unwrap();
    // The reconstruction layer starts at zero; perturb everything so every
    // path carries gradient.
    jitter(&mut m, s + 1, 0.1);
    vec![check("srcnn", &mut m, &uniform(&[8, 8, 1], 0.0, 1.0, s + 2))]
}

/// Whole networks compound the curvature of each layer, and at the default
/// Gauss and Gabor frequencies a 1e-5 central difference is no longer
/// accurate to 1e-5. The elementwise cases cover the defaults; here the two
/// stiff activations run at lower frequencies.
pub fn inr(s: u64) -> Vec<Case> {
    let coords = make_coord_grid(3, 4).unwrap().to_tensor();
    let kinds = [
        ("inr relu", ActivationKind::Relu),
        ("inr siren", ActivationKind::sine()),
        ("inr gauss", ActivationKind::Gauss { s: 3.0 }),
        ("inr wire", ActivationKind::ComplexGabor { omega0: 3.0, s0: 2.0 }),
    ];
    kinds
        .into_iter()
        .map(|(name, activation)| {
            let config = InrConfig {
                n_hidden_layers: 2,
                hidden_width: 6,
                activation,
                ..InrConfig::default()
            };
            let mut m = InrModel::init(&config, &mut rng::stream(s, "inr")).unwrap();
            check(name, &mut m, &coords)
        })
        .collect()
}

pub fn all(s: u64) -> Vec<Case> {
    [dense, conv, activations, residual_block, discriminator, srcnn, inr]
        .iter()
        .flat_map(|f| f(s))
        .collect()
}
