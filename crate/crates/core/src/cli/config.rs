//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long
//! flag names without the leading dashes (`loss`, `K`, `p-hid`, ...); any
//! flag given on the command line wins over the file.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value, got {raw:?}", i + 1))
            })?;
            let key = key.trim().trim_start_matches("--").to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// The flag if present, otherwise the parsed config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}
