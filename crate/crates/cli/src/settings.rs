//! Optional `key=value` defaults file. Command-line flags win over it.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::failure::Failure;

pub const KEYS: &[&str] = &[
    "window", "step", "pool", "hops", "neighbors", "seed", "mode", "order", "reranker", "qrels", "k", "gain",
    "warmup", "repetitions", "fill", "timeout", "parallel",
];

#[derive(Debug, Default)]
pub struct Defaults {
    values: HashMap<String, String>,
}

impl Defaults {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).with_path(path))?;
        Self::parse(&text).map_err(|m| Failure::config(format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", i + 1));
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value, else config value, else `fallback`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, fallback: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            Some(text) => text
                .parse()
                .map_err(|e| Failure::config(format!("config key {key}: {e}"))),
            None => Ok(fallback),
        }
    }

    pub fn pick_opt(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.raw(key).map(str::to_owned))
    }
}
