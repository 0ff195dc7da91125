//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored; a flag given on the command line always wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use trimap::TrimapError;

use crate::{usage, CliResult};

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                crate::Failure::Library(TrimapError::Parse {
                    line: i + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                })
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn string(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.values.get(key).cloned())
    }

    pub fn parse<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        Ok(self.parse::<bool>(None, key)?.unwrap_or(false))
    }

    pub fn list(&self, flag: Option<&str>, key: &str) -> CliResult<Option<Vec<f64>>> {
        match flag.or(self.values.get(key).map(String::as_str)) {
            None => Ok(None),
            Some(s) => parse_list(s).map(Some).map_err(usage),
        }
    }
}

/// Comma- or whitespace-separated reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("cannot parse `{t}` as a number")))
        .collect()
}
