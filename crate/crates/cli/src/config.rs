//! Flat `key = value` configuration with optional `[section]` prefixes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Parsed key/value pairs. Every key must be consumed by a typed getter;
/// [`Config::finish`] rejects the leftovers.
#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: BTreeSet<String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {}: unterminated section header `{line}`", k + 1))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, found `{line}`", k + 1))?;
            let key = key.trim();
            if key.is_empty() {
                bail!("line {}: empty key", k + 1);
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let entry = Entry {
                value: value.trim().to_string(),
                line: Some(k + 1),
            };
            if entries.insert(full.clone(), entry).is_some() {
                bail!("line {}: config key `{full}` is set twice", k + 1);
            }
        }
        Ok(Self {
            entries,
            used: BTreeSet::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Command-line override; replaces any value from the file.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(
            key.trim().to_string(),
            Entry {
                value: value.trim().to_string(),
                line: None,
            },
        );
    }

    fn locate(&self, key: &str) -> String {
        match self.entries.get(key).and_then(|e| e.line) {
            Some(line) => format!("config key `{key}` (line {line})"),
            None => format!("config key `{key}`"),
        }
    }

    pub fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.entries.get(key).map(|e| e.value.clone())
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.optional(key)?.unwrap_or(default))
    }

    pub fn optional<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("{}: cannot parse `{v}`: {e}", self.locate(key))),
        }
    }

    pub fn require<T>(&mut self, key: &str, hint: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.optional(key)?
            .ok_or_else(|| anyhow!("config key `{key}` is required ({hint})"))
    }

    /// Comma-separated list.
    pub fn list<T>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|e| anyhow!("{}: cannot parse `{}`: {e}", self.locate(key), p.trim()))
                })
                .collect(),
        }
    }

    /// Error for a value that parsed but is out of range.
    pub fn invalid(&self, key: &str, why: impl std::fmt::Display) -> anyhow::Error {
        anyhow!("{}: {why}", self.locate(key))
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !self.used.contains(*k)) {
            Some((key, _)) => bail!("{}: unknown key", self.locate(key)),
            None => Ok(()),
        }
    }
}
