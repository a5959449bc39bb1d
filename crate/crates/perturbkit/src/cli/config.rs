//! Key=value defaults file. Flags given on the command line win over config
//! entries, which win over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Keys a config file may set. Anything else is rejected so typos surface
/// instead of silently falling back to defaults.
const KNOWN_KEYS: [&str; 8] =
    ["seed", "seeds", "sweep", "weighting", "method", "grouping", "format", "lang"];

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key = value` lines. '#' starts a comment, blank lines are
    /// ignored, duplicate keys are an error.
    pub fn parse(src: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Usage(format!(
                    "config line {}: expected key=value, got {raw:?}",
                    i + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Usage(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let text = crate::text::decode_utf8(&bytes)?;
        Config::parse(&text)
    }

    /// Typed lookup; a present-but-unparsable value is a usage error naming
    /// the key.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Usage(format!("config key {key} = {raw:?}: {e}"))),
        }
    }
}
