//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, no sections. Keys are
//! case-insensitive and `-`/`_` are interchangeable, so `chunk-size` and
//! `chunk_size` name the same setting.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid("config", format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(Error::invalid("config", format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::invalid("config", format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(&normalize_key(key))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::invalid(key, format!("cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| Error::invalid(key, "missing required setting"))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::invalid(key, format!("cannot parse {s:?}: {e}")))
        })
        .collect()
}

/// Inclusive range `start:end:step`, or a comma-separated list.
pub fn parse_range(key: &str, value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [_] => parse_list(key, value),
        [start, end] | [start, end, _] => {
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::invalid(key, format!("cannot parse {s:?}: {e}")))
            };
            let (start, end) = (num(start)?, num(end)?);
            let step = if parts.len() == 3 { num(parts[2])? } else { 1.0 };
            if !(step > 0.0) || end < start {
                return Err(Error::invalid(key, "range needs start <= end and a positive step"));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        _ => Err(Error::invalid(key, format!("malformed range {value:?}"))),
    }
}
