//! Flat key-value config files.
//!
//! The format is deliberately small: one `key = value` pair per line, `#`
//! comments, no sections. Lists are comma-separated; weighted entries use
//! `name:weight`. Consumers declare their allowed keys so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

pub fn parse_kv(text: &str) -> Result<KvMap> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("expected 'key = value', got '{raw}'"),
            });
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                detail: "empty key".into(),
            });
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(KvMap { entries })
}

pub fn load_kv(path: impl AsRef<Path>) -> Result<KvMap> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_kv(&text)
}

impl KvMap {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Reject any key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key '{key}' (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") | Some("on") | Some("yes") => Ok(true),
            Some("false") | Some("off") | Some("no") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "key '{key}': '{v}' is not a boolean"
            ))),
        }
    }

    /// Comma-separated list of integers.
    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::Config(format!("key '{key}': '{p}' is not an integer"))
                    })
                })
                .collect(),
        }
    }

    pub fn u64_list(&self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::Config(format!("key '{key}': '{p}' is not an integer"))
                    })
                })
                .collect(),
        }
    }

    /// Comma-separated list of bare names.
    pub fn name_list(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    /// Comma-separated `name:weight` pairs.
    pub fn weighted_list(&self, key: &str, default: &[(&str, u64)]) -> Result<Vec<(String, u64)>> {
        match self.raw(key) {
            None => Ok(default
                .iter()
                .map(|(s, w)| (s.to_string(), *w))
                .collect()),
            Some(v) => v
                .split(',')
                .map(|pair| {
                    let (name, weight) = pair.split_once(':').ok_or_else(|| {
                        Error::Config(format!("key '{key}': expected 'name:weight', got '{pair}'"))
                    })?;
                    let w = weight.trim().parse().map_err(|_| {
                        Error::Config(format!("key '{key}': '{weight}' is not an integer"))
                    })?;
                    Ok((name.trim().to_string(), w))
                })
                .collect(),
        }
    }
}
