use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gridsr::datagen::{make_pairs, PairDataset, Split, SyntheticSpec};
use gridsr::inr::{comparison_csv, fit_inr, sample_inr, InrComparisonRow, InrConfig};
use gridsr::metrics::{LossKind, DEFAULT_PEAK};
use gridsr::nn::{AdamConfig, Checkpoint};
use gridsr::srcnn::{
    autoregress, bicubic_baseline_loss, history_csv, split_loss, train_srcnn, upscale_srcnn, SrcnnConfig,
    SrcnnModel, TrainHyper,
};
use gridsr::srgan::{gan_history_csv, train_srgan, DiscriminatorConfig, GeneratorLoss, SrganHyper};
use gridsr::{load_grid, normalize, render_heatmap, save_grid, GridField, MetricReport, NormStats, ResampleFactor};
use serde::Serialize;

use crate::args::{
    AutoregressArgs, Cli, Command, EvalArgs, FitInrArgs, GenDataArgs, GenLossName, LossName, ModelKind, RenderArgs,
    TrainArgs, UpscaleArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{beside, ManifestBuilder};

pub const RUN_MANIFEST: &str = "run.json";

pub fn run(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    let manifest = |seed: Option<u64>| {
        ManifestBuilder::new(
            argv.clone(),
            cli.command.name(),
            serde_json::to_value(&cli.command).unwrap_or_default(),
            seed,
        )
    };
    match &cli.command {
        Command::GenData(a) => gen_data(a, manifest(Some(a.seed))),
        Command::Train(a) => train(a, manifest(Some(a.seed))),
        Command::FitInr(a) => fit_inr_cmd(a, manifest(Some(a.seed))),
        Command::Upscale(a) => upscale(a, manifest(None)),
        Command::Autoregress(a) => autoregress_cmd(a, manifest(None)),
        Command::Eval(a) => eval(a, manifest(None)),
        Command::Render(a) => render(a, manifest(None)),
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::runtime(format!("creating {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

fn load(path: &Path) -> CliResult<GridField> {
    load_grid(path).map_err(|e| CliError::from(e).context(format!("loading {}", path.display())))
}

fn gen_data(a: &GenDataArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let spec = SyntheticSpec {
        n_fields: a.n,
        height: a.hr.height,
        width: a.hr.width,
        factor: ResampleFactor::new(a.factor)?,
        n_modes: a.modes,
        spectral_exponent: a.exponent,
        seed: a.seed,
    };
    spec.validate()?;
    let ds = make_pairs(&spec)?;
    create_dir(&a.out)?;
    ds.save(&a.out)?;
    for sub in ["lr", "hr", "manifest.txt"] {
        m.output(a.out.join(sub));
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        m.metric(&format!("n_{}", split.as_str()), ds.subset(split).count());
    }
    m.metric_f64("norm_min", ds.stats.min_val);
    m.metric_f64("norm_max", ds.stats.max_val);
    println!(
        "wrote {} pairs ({}x{} -> {}) to {}",
        ds.len(),
        a.hr.height / a.factor,
        a.hr.width / a.factor,
        a.hr,
        a.out.display()
    );
    m.write(&a.out.join(RUN_MANIFEST))?;
    Ok(())
}

fn loss_kind(name: LossName, edge_weight: f64) -> LossKind {
    match name {
        LossName::Mse => LossKind::Mse,
        LossName::Mae => LossKind::Mae,
        LossName::Edge => LossKind::Edge,
        LossName::Composite => LossKind::Composite { edge_weight },
    }
}

fn load_dataset(root: &Path) -> CliResult<PairDataset> {
    let (ds, warnings) =
        PairDataset::load(root).map_err(|e| CliError::from(e).context(format!("loading dataset {}", root.display())))?;
    for w in warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn train(a: &TrainArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let config = SrcnnConfig {
        feature_kernel: a.feature_kernel,
        map_kernel: a.map_kernel,
        reconstruct_kernel: a.reconstruct_kernel,
        feature_channels: a.feature_channels,
        map_channels: a.map_channels,
        n_residual_blocks: a.residual_blocks,
        residual_kernel: a.residual_kernel,
    };
    config.validate()?;
    let loss = loss_kind(a.loss, a.edge_weight);
    let hyper = TrainHyper {
        epochs: a.epochs,
        batch_size: a.batch_size,
        adam: AdamConfig::with_lr(a.lr),
        loss,
    };
    let ds = load_dataset(&a.data)?;
    create_dir(&a.out)?;
    let model_path = a.out.join("model.gsrw");
    let history_path = a.out.join("history.csv");
    let generator = match a.model {
        ModelKind::Srcnn => {
            let (model, history) = train_srcnn(&ds, config, &hyper, a.seed)?;
            for r in &history {
                println!("epoch {:>4}  train {:.6e}  val {:.6e}", r.epoch, r.train_loss, r.val_loss);
            }
            write_text(&history_path, &history_csv(&history))?;
            if let Some(last) = history.last() {
                m.metric_f64("final_train_loss", last.train_loss);
                m.metric_f64("final_val_loss", last.val_loss);
            }
            model
        }
        ModelKind::Srgan => {
            let d_config = DiscriminatorConfig {
                n_conv_layers: a.d_layers,
                base_channels: a.d_channels,
            };
            let gan = SrganHyper {
                generator: hyper,
                discriminator_adam: AdamConfig::with_lr(a.d_lr),
                adversarial_weight: a.adv_weight,
                generator_loss: match a.gen_loss {
                    GenLossName::NonSaturating => GeneratorLoss::NonSaturating,
                    GenLossName::Saturating => GeneratorLoss::Saturating,
                },
            };
            let out = train_srgan(&ds, config, d_config, &gan, a.seed)?;
            for r in &out.history {
                println!(
                    "epoch {:>4}  content {:.6e}  g_adv {:.4}  d {:.4}  d_acc {:.3}",
                    r.epoch, r.content_loss, r.g_adv_loss, r.d_loss, r.d_accuracy
                );
            }
            write_text(&history_path, &gan_history_csv(&out.history))?;
            let d_path = a.out.join("discriminator.gsrw");
            out.discriminator.to_checkpoint().save(&d_path)?;
            m.output(d_path);
            if let Some(last) = out.history.last() {
                m.metric_f64("final_content_loss", last.content_loss);
                m.metric_f64("final_d_accuracy", last.d_accuracy);
            }
            out.generator
        }
    };
    generator.to_checkpoint().save(&model_path)?;
    let test_loss = split_loss(&generator, &ds, Split::Test, loss)?;
    let test_bicubic = bicubic_baseline_loss(&ds, Split::Test, loss)?;
    println!("test {} loss: model {test_loss:.6e}, bicubic {test_bicubic:.6e}", loss.name());
    m.metric_f64("test_loss", test_loss);
    m.metric_f64("test_bicubic_loss", test_bicubic);
    m.output(model_path);
    m.output(history_path);
    m.write(&a.out.join(RUN_MANIFEST))?;
    Ok(())
}

fn fit_inr_cmd(a: &FitInrArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let input = load(&a.input)?;
    let truth = a.truth.as_deref().map(load).transpose()?;
    let out_dims = match (a.out_dims, &truth) {
        (Some(d), _) => (d.height, d.width),
        (None, Some(t)) => t.dims(),
        (None, None) => (input.height() * 4, input.width() * 4),
    };
    if let Some(t) = &truth {
        if t.dims() != out_dims {
            return Err(CliError::usage(format!(
                "truth is {}x{} but output dims are {}x{}",
                t.height(),
                t.width(),
                out_dims.0,
                out_dims.1
            )));
        }
    }
    let configs: Vec<InrConfig> = a
        .activations()
        .into_iter()
        .map(|activation| InrConfig {
            n_hidden_layers: a.layers,
            hidden_width: a.width,
            activation,
            epochs: a.epochs,
            lr: a.lr,
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let stats = NormStats::from_fields([&input])?;
    let lr = normalize(&input, &stats)?;
    let truth_norm = truth.as_ref().map(|t| normalize(t, &stats)).transpose()?;
    create_dir(&a.out)?;

    let mut rows = Vec::new();
    for config in &configs {
        let name = config.activation.name();
        let start = Instant::now();
        let fit = fit_inr(&lr, config, a.seed)?;
        let sampled = sample_inr(&fit.model, out_dims.0, out_dims.1, &stats)?;
        let seconds = start.elapsed().as_secs_f64();
        let field_path = a.out.join(format!("{name}.gsr"));
        let ck_path = a.out.join(format!("{name}.gsrw"));
        let hist_path = a.out.join(format!("{name}_history.csv"));
        save_grid(&sampled, &field_path)?;
        fit.model.to_checkpoint(Some(stats)).save(&ck_path)?;
        let mut hist = String::from("epoch,loss\n");
        for (e, l) in fit.history.iter().enumerate() {
            hist.push_str(&format!("{},{l}\n", e + 1));
        }
        write_text(&hist_path, &hist)?;
        m.output(field_path);
        m.output(ck_path);
        m.output(hist_path);
        m.metric_f64(&format!("{name}_final_loss"), fit.final_loss);

        // Against the truth when given, otherwise the fit itself.
        let report = match &truth_norm {
            Some(t) => Some(MetricReport::compute(&normalize(&sampled, &stats)?, t, DEFAULT_PEAK)?),
            None => MetricReport::compute(&fit.fitted, &lr, DEFAULT_PEAK).ok(),
        };
        match report {
            Some(r) => {
                println!("{name}: {r}");
                m.metric_f64(&format!("{name}_psnr"), r.psnr_db);
                m.metric_f64(&format!("{name}_ssim"), r.ssim);
                rows.push(InrComparisonRow {
                    activation: config.activation,
                    report: r,
                    seconds,
                });
            }
            None => println!("{name}: final loss {:.6e}", fit.final_loss),
        }
    }
    if configs.len() > 1 && !rows.is_empty() {
        rows.sort_by(|x, y| y.report.psnr_db.total_cmp(&x.report.psnr_db));
        let path = a.out.join("comparison.csv");
        write_text(&path, &comparison_csv(&rows))?;
        m.output(path);
    }
    m.write(&a.out.join(RUN_MANIFEST))?;
    Ok(())
}

fn load_srcnn(path: &Path) -> CliResult<SrcnnModel> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::from(e).context(format!("loading {}", path.display())))?;
    Ok(SrcnnModel::from_checkpoint(&ck)?)
}

fn resolve_factor(requested: Option<usize>, model: &SrcnnModel) -> CliResult<ResampleFactor> {
    match (requested, model.factor) {
        (Some(f), _) => Ok(ResampleFactor::new(f)?),
        (None, Some(f)) => Ok(f),
        (None, None) => Err(CliError::usage("checkpoint records no factor; pass --factor")),
    }
}

fn upscale(a: &UpscaleArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let model = load_srcnn(&a.model)?;
    let factor = resolve_factor(a.factor, &model)?;
    let field = load(&a.input)?;
    let out = upscale_srcnn(&model, &field, factor)?;
    save_grid(&out, &a.out)?;
    println!("wrote {}x{} field to {}", out.height(), out.width(), a.out.display());
    m.output(&a.out);
    m.write(&beside(&a.out))?;
    Ok(())
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    mse: f64,
    mae: f64,
    psnr: f64,
    ssim: f64,
}

fn autoregress_cmd(a: &AutoregressArgs, mut m: ManifestBuilder) -> CliResult<()> {
    if a.k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let model = load_srcnn(&a.model)?;
    let factor = resolve_factor(a.factor, &model)?;
    let field = load(&a.input)?;
    let truth = a.truth.as_deref().map(load).transpose()?;
    let out = autoregress(&model, &field, factor, a.k, truth.as_ref())?;
    save_grid(&out.field, &a.out)?;
    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".metrics.csv");
        PathBuf::from(p)
    });
    let mut csv = String::from("iteration,mse,mae,psnr,ssim\n");
    for (i, r) in out.reports.iter().enumerate() {
        println!("iteration {}: {r}", i + 1);
        csv.push_str(&format!("{},{},{},{},{}\n", i + 1, r.mse, r.mae, r.psnr_db, r.ssim));
    }
    write_text(&metrics_path, &csv)?;
    let rows: Vec<IterationRow> = out
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| IterationRow {
            iteration: i + 1,
            mse: r.mse,
            mae: r.mae,
            psnr: r.psnr_db,
            ssim: r.ssim,
        })
        .collect();
    m.metric("reference", if truth.is_some() { "truth" } else { "previous-iterate" });
    m.metric("iterations", serde_json::to_value(rows).unwrap_or_default());
    m.output(&a.out);
    m.output(metrics_path);
    m.write(&beside(&a.out))?;
    Ok(())
}

fn eval(a: &EvalArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let mut pred = load(&a.pred)?;
    let mut truth = load(&a.truth)?;
    pred.ensure_same_dims(&truth)?;
    if a.normalize {
        let stats = NormStats::from_fields([&truth])?;
        pred = normalize(&pred, &stats)?;
        truth = normalize(&truth, &stats)?;
    }
    let report = MetricReport::compute(&pred, &truth, a.peak)?;
    println!("{report}");
    if let Some(path) = &a.append {
        let fresh = fs::metadata(path).map(|md| md.len() == 0).unwrap_or(true);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::runtime(format!("opening {}: {e}", path.display())))?;
        let mut row = String::new();
        if fresh {
            row.push_str("pred,truth,mse,mae,psnr,ssim\n");
        }
        row.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.pred.display(),
            a.truth.display(),
            report.mse,
            report.mae,
            report.psnr_db,
            report.ssim
        ));
        f.write_all(row.as_bytes())
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
        m.metric_f64("mse", report.mse);
        m.metric_f64("mae", report.mae);
        m.metric_f64("psnr", report.psnr_db);
        m.metric_f64("ssim", report.ssim);
        m.output(path);
        m.write(&beside(path))?;
    }
    Ok(())
}

fn render(a: &RenderArgs, mut m: ManifestBuilder) -> CliResult<()> {
    let field = load(&a.input)?;
    render_heatmap(&field, &a.out)?;
    println!("wrote {}x{} heatmap to {}", field.height(), field.width(), a.out.display());
    m.output(&a.out);
    m.write(&beside(&a.out))?;
    Ok(())
}
