//! `--config FILE` support: `key=value` lines become flags of the chosen
//! subcommand unless the flag was given on the command line.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::Cli;

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(abfl_core::Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            });
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn given(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let with_value = format!("--{long}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag.as_str() || s.starts_with(&with_value)
    })
}

/// Returns `argv` with config-file settings spliced in after the subcommand.
pub fn apply(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.to_string_lossy()))?;
    let pairs = parse_config(&text)?;

    let root = Cli::command();
    let Some((pos, sub)) = argv.iter().enumerate().skip(1).find_map(|(i, a)| {
        root.find_subcommand(a.to_string_lossy().as_ref())
            .map(|s| (i, s))
    }) else {
        // no subcommand: let clap report it
        return Ok(argv);
    };

    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            bail!(abfl_core::Error::Config(
                "a config file cannot name another config file".into()
            ));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            bail!(abfl_core::Error::Config(format!(
                "unknown setting `{key}` for `{}`",
                sub.get_name()
            )));
        };
        if given(&argv, &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => bail!(abfl_core::Error::Config(format!(
                    "`{key}` expects true or false, got `{other}`"
                ))),
            }
        }
    }
    let mut out = argv;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}
