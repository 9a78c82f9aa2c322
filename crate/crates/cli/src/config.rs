//! `--config` files: `key = value` lines whose keys are long option names.
//!
//! Settings are spliced into the argument list after the subcommand, so an
//! option given on the command line always wins over the file.

use std::fs;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    pub io: bool,
}

fn split_config_flag(args: &[String]) -> Result<(Vec<String>, Option<String>), ConfigError> {
    let mut out = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it.next().ok_or_else(|| ConfigError {
                message: "--config needs a file path".into(),
                io: false,
            })?;
            path = Some(p.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            out.push(a.clone());
        }
    }
    Ok((out, path))
}

/// Parses a config file into `(key, value)` pairs.
pub fn parse_config(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
            message: format!("{origin}:{}: expected `key = value`", k + 1),
            io: true,
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(ConfigError {
                message: format!("{origin}:{}: invalid key", k + 1),
                io: true,
            });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&eq))
}

/// Expands `--config FILE` into explicit options. Returns the new argument
/// list and the settings taken from the file.
pub fn expand(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), ConfigError> {
    let (mut args, path) = split_config_flag(&args)?;
    let Some(path) = path else {
        return Ok((args, Vec::new()));
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError {
        message: format!("{path}: {e}"),
        io: true,
    })?;
    let settings = parse_config(&text, &path)?;
    let mut used = Vec::new();
    for (key, value) in settings {
        if given(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => args.push(format!("--{key}={value}")),
        }
        used.push((key, value));
    }
    Ok((args, used))
}
