//! `--config FILE` support: a key-value file whose entries become flags.
//!
//! Each non-comment line is `key = value` (or `key value`); keys are flag
//! names without the leading dashes. `true`/`false` toggle switches. Config
//! flags are inserted right after the subcommand, so flags given on the
//! command line come later and win.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub const SUBCOMMANDS: [&str; 8] = [
    "validate", "fit", "anova", "rank", "sos", "predict", "smooth", "synth",
];

/// Turns config text into command-line flags.
pub fn config_flags(text: &str, source: &Path) -> Result<Vec<String>> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, "true"),
            },
        };
        let key = key.trim_start_matches('-');
        if key.is_empty() || key.contains(char::is_whitespace) {
            bail!("{}:{}: bad key in `{raw}`", source.display(), i + 1);
        }
        if key == "config" {
            bail!(
                "{}:{}: config files cannot include other config files",
                source.display(),
                i + 1
            );
        }
        let value = value.trim_matches('"');
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.to_string());
            }
        }
    }
    Ok(flags)
}

/// Removes `--config FILE` from `args` and splices the file's flags in after
/// the subcommand.
pub fn expand(args: Vec<String>) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            match iter.next() {
                Some(path) => config = Some(path),
                None => {
                    // leave it for clap to report
                    out.push(arg);
                }
            }
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let flags = config_flags(&text, path)?;
    let at = out
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(out.len(), |i| i + 1);
    out.splice(at..at, flags);
    Ok(out)
}
