//! Flat key-value configuration.
//!
//! A config file is a TOML document with top-level scalar or array keys
//! only. Values are layered as defaults, then the file, then `--set
//! key=value` pairs, then the dedicated flags (`--seed`, `--out`, `--plots`,
//! `--threads`). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Keys shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    pub seed: u64,
    pub out: PathBuf,
    pub plots: bool,
    /// Worker threads for seed sweeps; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl Default for Common {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            plots: false,
            threads: None,
        }
    }
}

const COMMON_KEYS: [&str; 4] = ["seed", "out", "plots", "threads"];

/// Command-line layers applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub file: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plots: bool,
    pub threads: Option<usize>,
}

pub fn load_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_table(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse_table(text: &str) -> Result<Table> {
    let table: Table = text.parse()?;
    for (key, value) in &table {
        if matches!(value, Value::Table(_)) {
            bail!("config is flat; key `{key}` holds a table");
        }
    }
    Ok(table)
}

/// Parses `key=value`. The value is read as a TOML value when it parses as
/// one and as a bare string otherwise.
pub fn parse_assignment(text: &str) -> Result<(String, Value)> {
    let Some((key, raw)) = text.split_once('=') else {
        bail!("expected key=value, got `{text}`");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("empty key in `{text}`");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Merges every layer and splits the result into the common keys and the
/// experiment section.
pub fn resolve<T: DeserializeOwned>(overrides: &Overrides) -> Result<(Common, T)> {
    let mut table = match &overrides.file {
        Some(path) => load_table(path)?,
        None => Table::new(),
    };
    for item in &overrides.set {
        let (key, value) = parse_assignment(item)?;
        table.insert(key, value);
    }
    if let Some(seed) = overrides.seed {
        table.insert("seed".into(), Value::Integer(seed as i64));
    }
    if let Some(out) = &overrides.out {
        table.insert("out".into(), Value::String(out.display().to_string()));
    }
    if overrides.plots {
        table.insert("plots".into(), Value::Boolean(true));
    }
    if let Some(threads) = overrides.threads {
        table.insert("threads".into(), Value::Integer(threads as i64));
    }

    let mut common_table = Table::new();
    for key in COMMON_KEYS {
        if let Some(v) = table.remove(key) {
            common_table.insert(key.into(), v);
        }
    }
    let common: Common = Value::Table(common_table).try_into().context("invalid common key")?;
    let section: T = Value::Table(table).try_into().context("invalid experiment key")?;
    Ok((common, section))
}
