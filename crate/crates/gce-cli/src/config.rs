//! Layered key=value run configuration: a config file first, then
//! `--set key=value` overrides. Keys are checked against the command's
//! allow-list so typos fail loudly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::Result;

/// Marker for operator mistakes (exit code 2) as opposed to runtime
/// failures (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Resolved configuration after layering.
#[derive(Debug, Default)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str) -> Result<Option<(String, String)>> {
    let uncommented = line.split('#').next().unwrap_or("").trim();
    if uncommented.is_empty() {
        return Ok(None);
    }
    let (key, value) = uncommented
        .split_once('=')
        .ok_or_else(|| usage(format!("expected key=value, got {uncommented:?}")))?;
    Ok(Some((key.trim().to_string(), value.trim().to_string())))
}

impl KvConfig {
    /// Loads the file (when given), applies the `--set` overrides, and
    /// rejects keys outside `allowed`.
    pub fn load(file: Option<&Path>, sets: &[String], allowed: &[&str]) -> Result<KvConfig> {
        let mut cfg = KvConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                usage(format!("cannot read config file {}: {e}", path.display()))
            })?;
            for (i, line) in text.lines().enumerate() {
                if let Some((k, v)) = parse_line(line)
                    .map_err(|e| usage(format!("{} line {}: {e}", path.display(), i + 1)))?
                {
                    cfg.insert(k, v, allowed)?;
                }
            }
        }
        for set in sets {
            let (k, v) = parse_line(set)?
                .ok_or_else(|| usage(format!("empty --set argument {set:?}")))?;
            cfg.insert(k, v, allowed)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, key: String, value: String, allowed: &[&str]) -> Result<()> {
        if !allowed.contains(&key.as_str()) {
            return Err(usage(format!(
                "unknown config key {key:?} (expected one of: {})",
                allowed.join(", ")
            )));
        }
        self.values.insert(key, value);
        Ok(())
    }

    /// Typed lookup; a malformed value names its key.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                usage(format!("config key {key:?}: cannot parse {raw:?}: {e}"))
            }),
        }
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// The fully resolved map, for the manifest.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    /// Records a value so the manifest reflects what actually ran.
    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }
}

/// Usage check for paths named on the command line.
pub fn require_readable(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(usage(format!("{what} path {} does not exist", path.display())));
    }
    Ok(())
}
