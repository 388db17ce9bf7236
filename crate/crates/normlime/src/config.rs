//! Flat key=value configuration with a canonical digest.
//!
//! Commands assemble their effective settings (defaults, then an optional
//! config file, then command-line flags) into a [`ConfigMap`]; its digest
//! identifies the run in manifests and salience-map provenance. Keys are
//! kept sorted, so the canonical form — and therefore the digest — does not
//! depend on insertion or flag order.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

/// An ordered key=value map describing one command invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        ConfigMap::default()
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// whitespace around keys and values is trimmed. Later lines win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!(
                    "config line {}: expected key=value, got `{line}`",
                    line_no + 1
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Format(format!(
                    "config line {}: empty key",
                    line_no + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ConfigMap::parse(&text)
    }

    /// Inserts or overwrites one setting.
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Merges `other` over `self`: every key in `other` wins.
    pub fn apply(&mut self, other: &ConfigMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted `key=value` lines, one per entry, trailing newline.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_string().as_bytes())
    }
}
