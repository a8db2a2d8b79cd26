//! `--config FILE`: `key=value` lines spliced in as `--key value` flags.
//!
//! The file's flags are inserted right after the subcommand name, ahead of
//! everything typed on the command line. Every subcommand lets a repeated
//! flag override an earlier one, so explicit flags win. `key=true` becomes a
//! bare `--key`; `key=false` is dropped. Blank lines and `#` comments are
//! ignored.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const SUBCOMMANDS: [&str; 7] = ["gen-data", "train", "fit-inr", "upscale", "autoregress", "eval", "render"];

pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key=value, got {line:?}", n + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", n + 1);
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
}

/// Removes `--config` from `argv` and splices in the file's flags.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            path = Some(iter.next().context("--config needs a file")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            out.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(out);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let extra = parse_config(&text).with_context(|| format!("in config {}", path.display()))?;
    let at = out
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(out.len(), |i| i + 1);
    out.splice(at..at, extra);
    Ok(out)
}
