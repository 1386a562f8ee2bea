//! Flat `key=value` text files used for configs and checkpoints.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed `key=value` pairs. Blank lines and lines starting with `#` are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvFile {
    source: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&source, i + 1, "expected key=value"))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::parse(&source, i + 1, format!("duplicate key '{key}'")));
            }
        }
        Ok(KvFile { source, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(&self.source, *line, format!("invalid value '{v}' for '{key}'"))),
        }
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V> {
        self.get(key)?
            .ok_or_else(|| Error::parse(&self.source, 0, format!("missing key '{key}'")))
    }

    /// Whitespace-separated list value.
    pub fn get_vec<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split_whitespace()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::parse(&self.source, *line, format!("invalid element '{s}' in '{key}'")))
                })
                .collect::<Result<Vec<V>>>()
                .map(Some),
        }
    }
}

/// Builds `key=value` text in insertion order.
#[derive(Clone, Debug, Default)]
pub struct KvWriter {
    text: String,
}

impl KvWriter {
    pub fn new(header: &str) -> Self {
        KvWriter {
            text: format!("# {header}\n"),
        }
    }

    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.text.push_str(key);
        self.text.push('=');
        self.text.push_str(&value.to_string());
        self.text.push('\n');
        self
    }

    pub fn put_vec<V: Display>(&mut self, key: &str, values: &[V]) -> &mut Self {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.put(key, joined.join(" "))
    }

    pub fn finish(&self) -> &str {
        &self.text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}
