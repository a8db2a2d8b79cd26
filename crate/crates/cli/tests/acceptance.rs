//! The end-to-end acceptance run. Every criterion prints one PASS/FAIL line
//! to stderr (uncaptured) and the test fails if any criterion does.
//!
//! `cargo test -p gridsr-cli --test acceptance -- --nocapture` shows the
//! table as it is produced. The INR comparison dominates the runtime.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{artifacts, gridsr, gridsr_in, s, Outcome, TINY_SRCNN};
use gridsr::metrics::{edge_loss, mae, mse, psnr, ssim};
use gridsr::nn::Checkpoint;
use gridsr::resample::{bicubic_upscale, box_downsample, ResampleFactor};
use gridsr::{load_grid, save_grid, GridField};
use support::{grads, metrics as mo, resample as ro};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_ok(o: Outcome, what: &str) -> Result<Outcome, String> {
    if o.code == 0 {
        Ok(o)
    } else {
        Err(format!("{what} exited {}: {}", o.code, o.stderr.trim()))
    }
}

fn cli<I: IntoIterator<Item = S>, S: AsRef<std::ffi::OsStr>>(what: &str, args: I) -> Result<Outcome, String> {
    run_ok(gridsr(args), what)
}

fn cli_in(dir: &Path, what: &str, args: &[&str]) -> Result<Outcome, String> {
    run_ok(gridsr_in(dir, args), what)
}

fn csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    Ok(lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_owned)).collect())
        .collect())
}

fn num(row: &BTreeMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key)
        .ok_or_else(|| format!("missing column {key}"))?
        .parse()
        .map_err(|e| format!("{key}: {e}"))
}

fn manifest_metric(dir: &Path, key: &str) -> Result<f64, String> {
    let text = fs::read_to_string(dir.join("run.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v["metrics"][key].as_f64().ok_or_else(|| format!("run.json lacks metric {key}"))
}

fn first_file(dir: &Path) -> PathBuf {
    let mut names: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names.remove(0)
}

fn gen_data(out: &Path, n: usize, hr: &str, factor: usize, seed: u64) -> Result<(), String> {
    #[rustfmt::skip]
    cli("gen-data", [
        "gen-data", "--n", &n.to_string(), "--hr", hr, "--factor", &factor.to_string(),
        "--seed", &seed.to_string(), "--out", &s(out),
    ])?;
    Ok(())
}

fn train(model: &str, data: &Path, out: &Path, extra: &[&str]) -> Result<(), String> {
    run_ok(common::train(model, data, out, extra), &format!("train {model}"))?;
    Ok(())
}

// 1 ------------------------------------------------------------------------

const GRAD_SEEDS: u64 = 20;

fn gradient_integrity() -> Verdict {
    let mut worst: (f64, &str) = (0.0, "");
    let mut count = 0;
    for seed in (0..GRAD_SEEDS).map(|s| 1000 * s) {
        for (name, report) in grads::all(seed) {
            count += 1;
            ensure(report.passes(grads::TOL), || format!("{name} (seed {seed}): {report:?}"))?;
            if report.max_error() > worst.0 {
                worst = (report.max_error(), name);
            }
        }
    }
    Ok(format!("{count} checks over {GRAD_SEEDS} seeds, worst {:.1e} ({})", worst.0, worst.1))
}

// 2 ------------------------------------------------------------------------

fn metric_oracles() -> Verdict {
    const TOL: f64 = 1e-10;
    let mut worst: f64 = 0.0;
    let pairs = mo::pairs(100);
    for (a, b) in &pairs {
        let diffs = [
            mse(a, b).unwrap() - mo::oracle_mse(a, b),
            mae(a, b).unwrap() - mo::oracle_mae(a, b),
            edge_loss(a, b).unwrap() - mo::oracle_edge(a, b),
            psnr(a, b, 1.0).unwrap() - mo::oracle_psnr(a, b, 1.0),
            ssim(a, b, 1.0).unwrap() - mo::oracle_ssim(a, b, 1.0),
        ];
        for d in diffs {
            worst = worst.max(d.abs());
        }
        ensure(ssim(a, a, 1.0).unwrap() == 1.0, || "ssim(x, x) != 1".into())?;
        ensure(psnr(a, a, 1.0).unwrap() == f64::INFINITY, || "psnr(x, x) != inf".into())?;
    }
    ensure(worst < TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("{} pairs, max deviation {worst:.1e}, sentinels exact", pairs.len()))
}

// 3 ------------------------------------------------------------------------

fn resampling() -> Verdict {
    let factors = [ResampleFactor::TWO, ResampleFactor::FOUR];
    let c = GridField::filled(9, 7, -3.75).unwrap();
    for f in factors {
        let up = bicubic_upscale(&c, f).unwrap();
        ensure(up.values().iter().all(|v| (v + 3.75).abs() < 1e-12), || "constant not reproduced".into())?;
    }

    let (a, b) = (ro::random_field(11, 8, 10), ro::random_field(12, 8, 10));
    let mix = GridField::new(8, 10, a.values().iter().zip(b.values()).map(|(x, y)| 2.5 * x - 0.4 * y).collect())
        .unwrap();
    let mut linear: f64 = 0.0;
    for f in factors {
        let (ua, ub, um) = (
            bicubic_upscale(&a, f).unwrap(),
            bicubic_upscale(&b, f).unwrap(),
            bicubic_upscale(&mix, f).unwrap(),
        );
        for ((x, y), m) in ua.values().iter().zip(ub.values()).zip(um.values()) {
            linear = linear.max((2.5 * x - 0.4 * y - m).abs());
        }
    }
    ensure(linear < 1e-10, || format!("linearity error {linear:e}"))?;

    let mut oracle: f64 = 0.0;
    for (seed, (h, w)) in [(13, (6, 9)), (14, (1, 4)), (15, (12, 3))] {
        let f = ro::random_field(seed, h, w);
        for factor in factors {
            let fast = bicubic_upscale(&f, factor).unwrap();
            let slow = ro::oracle_bicubic(&f, factor.get());
            for (x, y) in fast.values().iter().zip(slow.values()) {
                oracle = oracle.max((x - y).abs());
            }
        }
    }
    ensure(oracle < 1e-10, || format!("oracle deviation {oracle:e}"))?;

    let f = ro::random_field(16, 32, 64);
    let mut mean: f64 = 0.0;
    for factor in factors {
        mean = mean.max((box_downsample(&f, factor).unwrap().mean() - f.mean()).abs());
    }
    ensure(mean < 1e-10, || format!("box mean drift {mean:e}"))?;
    Ok(format!(
        "oracle {oracle:.1e}, linearity {linear:.1e}, box mean drift {mean:.1e}"
    ))
}

// 4 ------------------------------------------------------------------------

/// WIRE at its library defaults (omega0 = 20, s0 = 10) barely trains on
/// this field (~26 dB); the lower frequency and envelope scale below are
/// passed through the CLI flags.
fn inr_ordering(work: &Path) -> Verdict {
    let data = work.join("inr-data");
    gen_data(&data, 3, "256x512", 4, 0)?;
    let lr = first_file(&data.join("lr"));
    let hr = data.join("hr").join(lr.file_name().unwrap());
    let out = work.join("inr");
    #[rustfmt::skip]
    cli("fit-inr", [
        "fit-inr", "--in", &s(&lr), "--truth", &s(&hr), "--act", "all",
        "--epochs", "2000", "--width", "128", "--gabor-omega0", "5", "--gabor-s0", "5",
        "--seed", "0", "--out", &s(&out),
    ])?;
    let rows = csv(&out.join("comparison.csv"))?;
    let psnr_of = |name: &str| -> Result<f64, String> {
        let row = rows.iter().find(|r| r["activation"] == name).ok_or(format!("no {name} row"))?;
        num(row, "psnr")
    };
    let relu = psnr_of("relu")?;
    let mut detail = format!("relu {relu:.2} dB");
    for name in ["siren", "gauss", "wire"] {
        let p = psnr_of(name)?;
        detail.push_str(&format!(", {name} {p:.2}"));
        ensure(p >= relu + 2.0, || format!("{name} {p:.2} dB < relu {relu:.2} + 2 ({detail})"))?;
    }
    Ok(detail)
}

// 5 ------------------------------------------------------------------------

/// 48 pairs split 70/15/15 gives 33 training pairs.
fn srcnn_beats_bicubic(work: &Path) -> Verdict {
    let data = work.join("srcnn-data");
    gen_data(&data, 48, "64x64", 2, 5)?;
    let out = work.join("srcnn");
    #[rustfmt::skip]
    cli("train srcnn", [
        "train", "srcnn", "--data", &s(&data), "--out", &s(&out), "--epochs", "10", "--seed", "5",
        "--feature-channels", "32", "--map-channels", "16", "--residual-blocks", "2",
    ])?;
    let model = manifest_metric(&out, "test_loss")?;
    let bicubic = manifest_metric(&out, "test_bicubic_loss")?;
    ensure(model < bicubic, || format!("held-out mse {model:.4e} vs bicubic {bicubic:.4e}"))?;
    Ok(format!(
        "held-out mse {model:.4e} < bicubic {bicubic:.4e} ({:.1}% lower), 10 epochs",
        100.0 * (1.0 - model / bicubic)
    ))
}

// 6 ------------------------------------------------------------------------

fn srgan_reduction(work: &Path) -> Verdict {
    let data = work.join("gan-data");
    gen_data(&data, 16, "32x32", 2, 6)?;
    let d = ["--d-layers", "2", "--d-channels", "4"];
    let (plain, zero, adv) = (work.join("plain"), work.join("gan0"), work.join("gan"));
    train("srcnn", &data, &plain, &["--epochs", "10", "--seed", "2"])?;
    train("srgan", &data, &zero, &[&["--epochs", "10", "--seed", "2", "--adv-weight", "0"][..], &d].concat())?;
    train("srgan", &data, &adv, &[&["--epochs", "10", "--seed", "2", "--adv-weight", "1e-3"][..], &d].concat())?;
    let (a, b) = (fs::read(plain.join("model.gsrw")).unwrap(), fs::read(zero.join("model.gsrw")).unwrap());
    ensure(a == b, || "generator checkpoints differ at adversarial weight 0".into())?;
    let rows = csv(&adv.join("history.csv"))?;
    ensure(rows.len() == 10, || format!("{} history rows", rows.len()))?;
    let mut acc = Vec::new();
    for r in &rows {
        let v = num(r, "d_accuracy")?;
        ensure(v.is_finite() && (0.0..=1.0).contains(&v), || format!("d_accuracy {v}"))?;
        for k in ["content_loss", "g_adv_loss", "d_loss"] {
            ensure(num(r, k)?.is_finite(), || format!("{k} not finite"))?;
        }
        acc.push(v);
    }
    Ok(format!(
        "{} identical checkpoint bytes; d_accuracy {:.3} -> {:.3}",
        a.len(),
        acc[0],
        acc[acc.len() - 1]
    ))
}

// 7 ------------------------------------------------------------------------

fn autoregress_contract(work: &Path) -> Verdict {
    let data = work.join("gan-data");
    let model = s(&work.join("plain").join("model.gsrw"));
    let input = first_file(&data.join("lr"));
    let truth = data.join("hr").join(input.file_name().unwrap());
    let p = |n: &str| s(&work.join(n));
    cli("upscale", ["upscale", "--model", &model, "--in", &s(&input), "--out", &p("up.gsr")])?;
    #[rustfmt::skip]
    cli("autoregress", ["autoregress", "--model", &model, "--in", &s(&input), "--k", "1", "--out", &p("ar1.gsr")])?;
    ensure(fs::read(p("up.gsr")).unwrap() == fs::read(p("ar1.gsr")).unwrap(), || {
        "k=1 differs from upscale".into()
    })?;
    let mut last = String::new();
    for reference in [None, Some(&truth)] {
        let mut args = vec!["autoregress", "--model", &model, "--in", input.to_str().unwrap(), "--k", "5"];
        let t = reference.map(|t| s(t));
        if let Some(t) = &t {
            args.extend(["--truth", t.as_str()]);
        }
        let out = p("ar5.gsr");
        args.extend(["--out", out.as_str()]);
        cli("autoregress", &args)?;
        let rows = csv(&work.join("ar5.gsr.metrics.csv"))?;
        ensure(rows.len() == 5, || format!("{} metric rows", rows.len()))?;
        for r in &rows {
            for k in ["mse", "mae", "psnr", "ssim"] {
                let v = num(r, k)?;
                // Against the previous iterate a fixed point is possible,
                // where PSNR is legitimately +inf.
                let ok = v.is_finite() || (k == "psnr" && reference.is_none() && v == f64::INFINITY);
                ensure(ok, || format!("iteration {} {k} = {v}", r["iteration"]))?;
            }
        }
        last = format!("k=5 vs truth: psnr {:.2} -> {:.2} dB", num(&rows[0], "psnr")?, num(&rows[4], "psnr")?);
    }
    Ok(format!("k=1 bit-identical to upscale; {last}"))
}

// 8 ------------------------------------------------------------------------

/// The whole pipeline, run from inside `dir` with relative paths.
fn pipeline(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).unwrap();
    #[rustfmt::skip]
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("gen-data", vec!["gen-data", "--n", "8", "--hr", "32x32", "--factor", "2", "--seed", "8", "--out", "d"]),
        ("train srcnn", [&["train", "srcnn", "--data", "d", "--out", "cnn", "--epochs", "3", "--seed", "8"][..], &TINY_SRCNN].concat()),
        ("train srgan", [&["train", "srgan", "--data", "d", "--out", "gan", "--epochs", "3", "--seed", "8",
            "--d-layers", "2", "--d-channels", "4"][..], &TINY_SRCNN].concat()),
        ("fit-inr", vec!["fit-inr", "--in", "d/lr/f0000.gsr", "--truth", "d/hr/f0000.gsr", "--act", "all",
            "--epochs", "30", "--width", "16", "--seed", "8", "--out", "inr"]),
        ("upscale", vec!["upscale", "--model", "cnn/model.gsrw", "--in", "d/lr/f0001.gsr", "--out", "up.gsr"]),
        ("autoregress", vec!["autoregress", "--model", "gan/model.gsrw", "--in", "d/lr/f0001.gsr", "--k", "3",
            "--truth", "d/hr/f0001.gsr", "--out", "ar.gsr"]),
        ("eval", vec!["eval", "--pred", "up.gsr", "--truth", "d/hr/f0001.gsr", "--append", "scores.csv"]),
        ("eval", vec!["eval", "--pred", "ar.gsr", "--truth", "d/hr/f0001.gsr", "--normalize", "--append", "scores.csv"]),
        ("render", vec!["render", "--in", "up.gsr", "--out", "up.pgm"]),
    ];
    for (what, args) in steps {
        cli_in(dir, what, &args)?;
    }
    Ok(())
}

/// Drops the wall-clock `seconds` column of the INR comparison table.
fn without_timings(mut files: Vec<(PathBuf, Vec<u8>)>) -> Vec<(PathBuf, Vec<u8>)> {
    for (path, bytes) in &mut files {
        if path.ends_with("comparison.csv") {
            let text = String::from_utf8(bytes.clone()).unwrap();
            let trimmed: String = text.lines().map(|l| format!("{}\n", l.rsplit_once(',').unwrap().0)).collect();
            *bytes = trimmed.into_bytes();
        }
    }
    files
}

fn determinism_and_formats(work: &Path) -> Verdict {
    let (a, b) = (work.join("det-a"), work.join("det-b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let (fa, fb) = (without_timings(artifacts(&a)), without_timings(artifacts(&b)));
    let names = |f: &[(PathBuf, Vec<u8>)]| f.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    ensure(names(&fa) == names(&fb), || "different artifact sets".into())?;
    for ((path, x), (_, y)) in fa.iter().zip(&fb) {
        ensure(x == y, || format!("{} differs between runs", path.display()))?;
    }
    for sub in ["up.gsr.run.json", "ar.gsr.run.json", "scores.csv.run.json", "up.pgm.run.json", "cnn/run.json"] {
        ensure(a.join(sub).exists(), || format!("missing manifest {sub}"))?;
    }

    let (mut grids, mut checkpoints) = (0, 0);
    for (path, bytes) in &fa {
        let ext = path.extension().and_then(|e| e.to_str());
        let again = match ext {
            Some("gsr") => {
                grids += 1;
                GridField::from_bytes(bytes).map_err(|e| e.to_string())?.to_bytes()
            }
            Some("gsrw") => {
                checkpoints += 1;
                Checkpoint::from_bytes(bytes).map_err(|e| e.to_string())?.to_bytes()
            }
            _ => continue,
        };
        ensure(&again == bytes, || format!("{} does not round-trip", path.display()))?;
    }
    // And through the file API.
    let tmp = work.join("rt.gsr");
    let field = load_grid(a.join("up.gsr")).map_err(|e| e.to_string())?;
    save_grid(&field, &tmp).map_err(|e| e.to_string())?;
    ensure(fs::read(&tmp).unwrap() == fs::read(a.join("up.gsr")).unwrap(), || "save(load(f)) != f".into())?;
    Ok(format!(
        "{} artifacts identical across 9 commands x 2 runs; {grids} GSR1 + {checkpoints} checkpoint files round-trip byte-exact",
        fa.len()
    ))
}

// ---------------------------------------------------------------------------

struct Criterion<'a> {
    id: u32,
    title: &'a str,
    budget: Option<Duration>,
    run: Box<dyn FnOnce() -> Verdict + 'a>,
}

fn line(text: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{text}");
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    #[rustfmt::skip]
    let criteria = vec![
        Criterion { id: 1, title: "gradient integrity", budget: Some(Duration::from_secs(60)), run: Box::new(gradient_integrity) },
        Criterion { id: 2, title: "metric oracles", budget: Some(Duration::from_secs(10)), run: Box::new(metric_oracles) },
        Criterion { id: 3, title: "resampling", budget: Some(Duration::from_secs(5)), run: Box::new(resampling) },
        Criterion { id: 4, title: "INR ordering", budget: None, run: Box::new(|| inr_ordering(w)) },
        Criterion { id: 5, title: "SRCNN beats bicubic", budget: mins(10), run: Box::new(|| srcnn_beats_bicubic(w)) },
        Criterion { id: 6, title: "SRGAN reduction", budget: None, run: Box::new(|| srgan_reduction(w)) },
        Criterion { id: 7, title: "autoregressive contract", budget: None, run: Box::new(|| autoregress_contract(w)) },
        Criterion { id: 8, title: "determinism & formats", budget: None, run: Box::new(|| determinism_and_formats(w)) },
    ];
    let mut failed = Vec::new();
    for c in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let verdict = match (verdict, c.budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:.1?}, budget {b:?}")),
            (v, _) => v,
        };
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        line(&format!("criterion {} [{tag}] {} ({:.1}s): {detail}", c.id, c.title, took.as_secs_f64()));
        if verdict.is_err() {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
