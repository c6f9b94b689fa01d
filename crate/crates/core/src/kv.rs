//! `key = value` text files: one entry per line, `#` starts a comment, keys may repeat.

use crate::error::{Error, Result};

pub(crate) fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: k + 1,
            message: format!("expected `key = value`, found {raw:?}"),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn get<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

pub(crate) fn require<'a>(entries: &'a [(String, String)], key: &str) -> Result<&'a str> {
    get(entries, key).ok_or_else(|| Error::Format(format!("missing key {key:?}")))
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("bad value {value:?} for {key:?}")))
}
