//! `key = value` config files merged into the command line.
//!
//! Keys are long option names (`games`, `budget`, `out` ...); underscores
//! are accepted for hyphens. Flags given on the command line win over the
//! file because they are parsed later.

use std::ffi::OsString;
use std::path::Path;

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        pairs.push((key, v.trim().trim_matches('"').to_owned()));
    }
    Ok(pairs)
}

/// Removes `--config FILE` from `args` and splices the file's pairs in
/// right after the subcommand.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            file = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(v) = s.strip_prefix("--config=") {
            file = Some(OsString::from(v));
        } else {
            rest.push(a);
        }
    }
    let Some(file) = file else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&file)).map_err(|e| format!("cannot read config {}: {e}", file.to_string_lossy()))?;
    let mut injected = Vec::new();
    for (k, v) in parse_config(&text)? {
        match v.as_str() {
            "true" => injected.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                injected.push(OsString::from(format!("--{k}")));
                injected.push(OsString::from(v));
            }
        }
    }
    // Program name, then the subcommand, then the file, then the rest.
    let split = rest.len().min(2);
    let tail = rest.split_off(split);
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}
