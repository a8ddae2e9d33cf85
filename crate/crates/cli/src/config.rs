//! Layered configuration: defaults < config file < `--set key=value` < flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string so `model=cnn` works without quotes.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn parse_set(item: &str) -> Result<(String, Value)> {
    let Some((key, value)) = item.split_once('=') else {
        bail!("override `{item}` is not of the form key=value");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{item}` has an empty key");
    }
    Ok((key.to_string(), parse_value(value.trim())))
}

/// Resolves a config struct from its defaults and the override layers.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    sets: &[String],
    flags: Table,
) -> Result<T> {
    let mut table = Table::try_from(defaults).context("serializing defaults")?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let from_file: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        table.extend(from_file);
    }
    for item in sets {
        let (k, v) = parse_set(item)?;
        table.insert(k, v);
    }
    table.extend(flags);
    let text = toml::to_string(&table)?;
    toml::from_str(&text).context("invalid configuration")
}

/// Collects explicitly given flags into a table, skipping absent ones.
#[derive(Default)]
pub struct Flags(Table);

impl Flags {
    pub fn opt<V: Serialize>(mut self, key: &str, value: Option<V>) -> Result<Self> {
        if let Some(v) = value {
            self.0.insert(key.to_string(), Value::try_from(v)?);
        }
        Ok(self)
    }

    pub fn into_table(self) -> Table {
        self.0
    }
}
