//! `--config path`: defaults from a `key = value` file.
//!
//! Keys are long option names of the chosen subcommand. Each entry is spliced
//! into the argument list right after the subcommand unless the option is
//! already given. Whitespace separates multiple values (`x0 = -3 0`); `true`
//! and `false` switch flags on or leave them off. `#` starts a comment.

use std::ffi::OsString;
use std::path::Path;

use crate::error::CliError;

const SUBCOMMANDS: [&str; 4] = ["run", "convergence", "check", "modified"];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_config(src: &str, origin: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| CliError::Usage(format!("{origin}: line {}: {msg}", i + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(err(&format!("invalid key {key:?}")));
        }
        let key = key.replace('_', "-");
        if key == "config" {
            return Err(err("config files cannot include other config files"));
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(err(&format!("duplicate key {key:?}")));
        }
        let values: Vec<String> = value.split_whitespace().map(str::to_string).collect();
        if values.is_empty() {
            return Err(err(&format!("key {key:?} has no value")));
        }
        entries.push(Entry { key, values });
    }
    Ok(entries)
}

fn config_path(argv: &[OsString]) -> Result<Option<(usize, OsString)>, CliError> {
    for (i, a) in argv.iter().enumerate().skip(1) {
        let Some(s) = a.to_str() else { continue };
        if s == "--" {
            break;
        }
        if s == "--config" {
            let path = argv
                .get(i + 1)
                .cloned()
                .ok_or_else(|| CliError::Usage("--config needs a path".into()))?;
            return Ok(Some((i, path)));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some((i, p.into())));
        }
    }
    Ok(None)
}

fn given(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    argv.iter()
        .filter_map(|a| a.to_str())
        .any(|s| s == flag || s.starts_with(&prefix))
}

/// Splices config-file defaults into `argv`. Returns `argv` unchanged when no
/// `--config` is present.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some((_, path)) = config_path(&argv)? else {
        return Ok(argv);
    };
    let display = path.to_string_lossy().into_owned();
    let src = std::fs::read_to_string(Path::new(&path)).map_err(|e| CliError::io(&display, e))?;
    let entries = parse_config(&src, &display)?;
    let Some(sub) = argv
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        // Let the parser report the missing subcommand.
        return Ok(argv);
    };
    let mut injected: Vec<OsString> = Vec::new();
    for e in entries {
        if given(&argv, &e.key) {
            continue;
        }
        match e.values.as_slice() {
            [v] if v == "true" => injected.push(format!("--{}", e.key).into()),
            [v] if v == "false" => {}
            [v] => injected.push(format!("--{}={v}", e.key).into()),
            vs => {
                injected.push(format!("--{}", e.key).into());
                injected.extend(vs.iter().map(OsString::from));
            }
        }
    }
    let mut out = argv;
    out.splice(sub + 1..sub + 1, injected);
    Ok(out)
}
