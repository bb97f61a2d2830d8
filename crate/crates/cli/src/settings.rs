//! Flag and config-file merging.

use std::path::Path;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Parsed `--config` file; empty when none was given.
#[derive(Debug, Default)]
pub struct ConfigFile {
    tables: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(Self {
            tables: text.parse()?,
        })
    }

    /// Fills every flag left unset (`None` or an empty list) from table `section`.
    pub fn resolve<A: Serialize + DeserializeOwned>(&self, section: &str, flags: A) -> anyhow::Result<A> {
        let Some(table) = self.tables.get(section) else { return Ok(flags) };
        let Value::Object(table) = serde_json::to_value(table)? else {
            bail!("config entry [{section}] must be a table")
        };
        let Value::Object(mut merged) = serde_json::to_value(&flags)? else {
            bail!("options must serialize to an object")
        };
        for (key, value) in table {
            match merged.get(&key) {
                None => bail!("unknown key {key:?} in config table [{section}]"),
                Some(Value::Null) => {
                    merged.insert(key, value);
                }
                Some(Value::Array(a)) if a.is_empty() => {
                    merged.insert(key, value);
                }
                Some(_) => {}
            }
        }
        serde_json::from_value(Value::Object(merged)).with_context(|| format!("config table [{section}]"))
    }
}

/// Unwraps a required option with a message naming its flag.
pub fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.with_context(|| format!("--{flag} is required (flag or config key {})", flag.replace('-', "_")))
}
