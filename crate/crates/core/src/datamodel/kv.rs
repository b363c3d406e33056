//! `key=value` text files used for manifests, run configs and checkpoints.
//!
//! One pair per line; blank lines and lines starting with `#` are skipped;
//! whitespace around keys and values is trimmed. Keys must be unique.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", lineno + 1));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key '{k}'", lineno + 1));
        }
    }
    Ok(out)
}

/// Reads a key=value file; malformed content is reported as a data error.
pub fn read(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes pairs in key order, so output is canonical.
pub fn write(path: &Path, pairs: &BTreeMap<String, String>) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        let _ = writeln!(text, "{k}={v}");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
