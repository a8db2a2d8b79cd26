//! Helpers for driving the built binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stdout:\n{}\nstderr:\n{}", self.stdout, self.stderr);
        self
    }
}

pub fn gridsr<I, S>(args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    gridsr_in(Path::new("."), args)
}

/// Runs with `dir` as the working directory, so relative paths (which end
/// up inside CSV rows) do not depend on where the test lives.
pub fn gridsr_in<I, S>(dir: &Path, args: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_gridsr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Outcome {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn s(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_owned()
}

/// Every file under `root`, relative, sorted; manifests left out since
/// they carry wall-clock timestamps.
pub fn artifacts(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if !path.to_string_lossy().ends_with(".json") {
                out.push((path.strip_prefix(root).unwrap().to_owned(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Flags for a generator small enough to train in a second.
pub const TINY_SRCNN: [&str; 14] = [
    "--feature-kernel",
    "3",
    "--map-kernel",
    "3",
    "--reconstruct-kernel",
    "3",
    "--feature-channels",
    "4",
    "--map-channels",
    "4",
    "--residual-blocks",
    "1",
    "--batch-size",
    "2",
];

pub fn gen_data(out: &Path, n: usize, hr: &str, factor: usize, seed: u64) {
    gridsr([
        "gen-data",
        "--n",
        &n.to_string(),
        "--hr",
        hr,
        "--factor",
        &factor.to_string(),
        "--modes",
        "8",
        "--seed",
        &seed.to_string(),
        "--out",
        &s(out),
    ])
    .ok();
}

pub fn train(model: &str, data: &Path, out: &Path, extra: &[&str]) -> Outcome {
    let mut args = vec![
        "train".to_owned(),
        model.to_owned(),
        "--data".to_owned(),
        s(data),
        "--out".to_owned(),
        s(out),
    ];
    args.extend(TINY_SRCNN.iter().map(|a| a.to_string()));
    args.extend(extra.iter().map(|a| a.to_string()));
    gridsr(args)
}
