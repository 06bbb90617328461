//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use super::CliError;

/// Resolved settings for one command: built-in defaults, then a config
/// file, then `--set` pairs, then dedicated flags, each layer overriding
/// the previous one. Only keys the command declares are accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    command: &'static str,
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines; `#` starts a comment line, blank lines are
/// skipped and a repeated key is an error.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, found {line:?}", i + 1)))?;
        let key = k.trim().to_owned();
        if seen.insert(key.clone(), ()).is_some() {
            return Err(CliError::Config(format!("config line {}: key {key:?} repeated", i + 1)));
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    /// Starts from `defaults`, the full list of keys `command` accepts.
    pub fn new(command: &'static str, defaults: &[(&str, &str)]) -> RunConfig {
        RunConfig {
            command,
            values: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    /// Overrides a declared key.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.into();
                Ok(())
            }
            None => Err(CliError::Config(format!("{} does not take the key {key:?}", self.command))),
        }
    }

    /// Applies every pair of a config file's text.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, v)?;
        }
        Ok(())
    }

    /// Applies one `KEY=VALUE` override.
    pub fn merge_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, found {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// Adds a value computed during the run so it is echoed with the rest.
    pub fn record(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_owned(), value.into());
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("{key}: cannot parse {raw:?}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(CliError::Config(format!("{key}: expected true or false, found {other:?}"))),
        }
    }

    /// A path that must be given.
    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.optional_path(key)
            .ok_or_else(|| CliError::Config(format!("{} needs {key}", self.command)))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// `key=value` lines in key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
