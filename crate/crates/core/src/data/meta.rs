use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `key=value` pairs one per line, in the order given.
pub fn write_meta(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c)) {
            return Err(Error::InvalidConfig(format!("invalid metadata key {k:?}")));
        }
        if v.contains('\n') {
            return Err(Error::InvalidConfig(format!(
                "metadata value for {k:?} contains a newline"
            )));
        }
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads `key=value` pairs; blank lines and `#` comments are allowed, and
/// malformed lines are reported with their line number.
pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(Error::Format {
                    format: "metadata",
                    path: path.display().to_string(),
                    reason: format!("line {}: expected key=value, got {:?}", lineno + 1, line),
                })
            }
        }
    }
    Ok(pairs)
}

/// Looks up a key in parsed metadata.
pub fn meta_get<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}
