use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridsr::nn::ActivationKind;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "gridsr", version, about = "Super-resolution of gridded geophysical fields")]
pub struct Cli {
    /// key=value file whose entries act as flags; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic LR/HR pair dataset
    GenData(GenDataArgs),
    /// Train a convolutional model on a dataset
    Train(TrainArgs),
    /// Fit an implicit neural representation to one field and resample it
    FitInr(FitInrArgs),
    /// Upscale a field with a trained model
    Upscale(UpscaleArgs),
    /// Upscale once, then refine repeatedly at the target resolution
    Autoregress(AutoregressArgs),
    /// Score a prediction against ground truth
    Eval(EvalArgs),
    /// Write a field as a grayscale PGM heatmap
    Render(RenderArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::FitInr(_) => "fit-inr",
            Command::Upscale(_) => "upscale",
            Command::Autoregress(_) => "autoregress",
            Command::Eval(_) => "eval",
            Command::Render(_) => "render",
        }
    }
}

/// `HxW`, e.g. `64x128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        let (height, width) = (parse(h)?, parse(w)?);
        if height == 0 || width == 0 {
            return Err(format!("dimensions must be positive, got {s}"));
        }
        Ok(Self { height, width })
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

fn parse_factor(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(f @ (1 | 2 | 4)) => Ok(f),
        Ok(f) => Err(format!("factor must be 1, 2 or 4, got {f}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    /// Number of field pairs
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// High-resolution dimensions
    #[arg(long, default_value = "256x512")]
    pub hr: Dims,
    #[arg(long, default_value_t = 4, value_parser = parse_factor)]
    pub factor: usize,
    /// Plane-wave modes per field
    #[arg(long, default_value_t = 48)]
    pub modes: usize,
    /// Amplitude falls off as |k|^-exponent
    #[arg(long, default_value_t = 2.5)]
    pub exponent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Srcnn,
    Srgan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Mse,
    Mae,
    Edge,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenLossName {
    NonSaturating,
    Saturating,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    /// Dataset root written by gen-data (lr/, hr/, manifest.txt)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = LossName::Mse)]
    pub loss: LossName,
    /// Edge term weight for the composite loss
    #[arg(long, default_value_t = 0.1)]
    pub edge_weight: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for checkpoint, history and manifest
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 9)]
    pub feature_kernel: usize,
    #[arg(long, default_value_t = 5)]
    pub map_kernel: usize,
    #[arg(long, default_value_t = 5)]
    pub reconstruct_kernel: usize,
    #[arg(long, default_value_t = 64)]
    pub feature_channels: usize,
    #[arg(long, default_value_t = 32)]
    pub map_channels: usize,
    #[arg(long, default_value_t = 4)]
    pub residual_blocks: usize,
    #[arg(long, default_value_t = 3)]
    pub residual_kernel: usize,

    /// Adversarial weight in the generator loss (srgan)
    #[arg(long, default_value_t = 1e-3)]
    pub adv_weight: f64,
    /// Discriminator conv layers (srgan)
    #[arg(long, default_value_t = 4)]
    pub d_layers: usize,
    /// Discriminator channels in the first layer (srgan)
    #[arg(long, default_value_t = 32)]
    pub d_channels: usize,
    /// Discriminator learning rate (srgan)
    #[arg(long, default_value_t = 1e-4)]
    pub d_lr: f64,
    /// Generator adversarial objective (srgan)
    #[arg(long, value_enum, default_value_t = GenLossName::NonSaturating)]
    pub gen_loss: GenLossName,
}

/// One activation or all four.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActChoice {
    One(ActivationKind),
    All,
}

impl FromStr for ActChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ActChoice::All);
        }
        s.parse().map(ActChoice::One).map_err(|e: gridsr::Error| e.to_string())
    }
}

impl ActChoice {
    pub fn kinds(self) -> Vec<ActivationKind> {
        match self {
            ActChoice::One(k) => vec![k],
            ActChoice::All => ActivationKind::all_defaults().to_vec(),
        }
    }
}

impl Serialize for ActChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ActChoice::One(k) => s.serialize_str(k.name()),
            ActChoice::All => s.serialize_str("all"),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct FitInrArgs {
    /// Field to fit
    #[arg(long = "in")]
    pub input: PathBuf,
    /// relu, siren, gauss, wire, or all
    #[arg(long, default_value = "siren")]
    pub act: ActChoice,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    /// Frequency of the sine activation
    #[arg(long, default_value_t = ActivationKind::DEFAULT_SINE_OMEGA0)]
    pub sine_omega0: f64,
    /// Width parameter of the Gauss activation
    #[arg(long, default_value_t = ActivationKind::DEFAULT_GAUSS_S)]
    pub gauss_s: f64,
    /// Frequency of the complex Gabor (wire) activation
    #[arg(long, default_value_t = ActivationKind::DEFAULT_GABOR_OMEGA0)]
    pub gabor_omega0: f64,
    /// Envelope scale of the complex Gabor (wire) activation
    #[arg(long, default_value_t = ActivationKind::DEFAULT_GABOR_S0)]
    pub gabor_s0: f64,
    /// Output dimensions; defaults to the truth's, else 4x the input's
    #[arg(long)]
    pub out_dims: Option<Dims>,
    /// Ground truth at the output dimensions, for scoring
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

impl FitInrArgs {
    /// The chosen activations with their hyperparameters from the flags.
    pub fn activations(&self) -> Vec<ActivationKind> {
        self.act
            .kinds()
            .into_iter()
            .map(|k| match k {
                ActivationKind::Relu => ActivationKind::Relu,
                ActivationKind::Sine { .. } => ActivationKind::Sine { omega0: self.sine_omega0 },
                ActivationKind::Gauss { .. } => ActivationKind::Gauss { s: self.gauss_s },
                ActivationKind::ComplexGabor { .. } => ActivationKind::ComplexGabor {
                    omega0: self.gabor_omega0,
                    s0: self.gabor_s0,
                },
            })
            .collect()
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct UpscaleArgs {
    /// Checkpoint written by train
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to the factor the model was trained for
    #[arg(long, value_parser = parse_factor)]
    pub factor: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct AutoregressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Refinement passes
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_parser = parse_factor)]
    pub factor: Option<usize>,
    /// Score every iteration against this field instead of the previous iterate
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration metrics CSV; defaults to `<out>.metrics.csv`
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Peak value for PSNR and SSIM
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
    /// Min-max normalize both fields by the truth's range first
    #[arg(long)]
    pub normalize: bool,
    /// Append a CSV row to this file
    #[arg(long)]
    pub append: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct RenderArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
