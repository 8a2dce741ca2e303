//! Flag defaults, config-file merging, and the run manifest.
//!
//! Precedence: command-line flags > config file > built-in defaults. The
//! config file is line-oriented `key = value` text where keys are the
//! long flag names.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};

/// Parsed `key = value` file.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    lineno + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key {key} = {raw:?}: {e}"),
            },
        }
    }
}

/// CLI > file > default.
pub fn resolve<T: std::str::FromStr>(
    cli: Option<T>,
    file: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match cli {
        Some(v) => Ok(v),
        None => Ok(file.get(key)?.unwrap_or(default)),
    }
}

/// CLI > file > default, for values that may legitimately stay unset.
pub fn resolve_opt<T: std::str::FromStr>(
    cli: Option<T>,
    file: &ConfigFile,
    key: &str,
    default: Option<T>,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match cli {
        Some(v) => Ok(Some(v)),
        None => match file.get(key)? {
            Some(v) => Ok(Some(v)),
            None => Ok(default),
        },
    }
}

pub fn version_string() -> String {
    format!("kge {}", env!("CARGO_PKG_VERSION"))
}

/// Everything needed to reproduce a run, plus phase timings.
#[derive(Debug, Default)]
pub struct RunManifest {
    pub fields: Vec<(String, String)>,
    pub timings: Vec<(String, Duration)>,
}

impl RunManifest {
    pub fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn time(&mut self, phase: &str, elapsed: Duration) {
        self.timings.push((phase.to_string(), elapsed));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "version = {}", version_string());
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (phase, d) in &self.timings {
            let _ = writeln!(out, "time_{phase}_secs = {:.3}", d.as_secs_f64());
        }
        std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
    }
}
