//! Run configuration and its flat `key = value` file format.
//!
//! Keys are dotted paths (`train.lr`, `model.encoder`, `gen.height`);
//! `#` starts a comment line. Values are written as JSON scalars or
//! arrays, except string-valued keys which take the raw text.

use std::collections::BTreeMap;
use std::path::Path;

use pgtk_core::data::GenConfig;
use pgtk_core::model::ModelConfig;
use pgtk_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data: Option<String>,
    pub val: Option<String>,
    pub out: Option<String>,
    pub model: Option<String>,
    pub piece: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSettings {
    pub pieces: usize,
    /// Fraction of a training dataset held out for validation when no
    /// separate validation set is given.
    pub val_fraction: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            pieces: 16,
            val_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub mode: String,
    pub oracle: bool,
    pub per_piece: bool,
    pub stride: usize,
    pub threshold: f32,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            mode: "all".into(),
            oracle: false,
            per_piece: false,
            stride: 1,
            threshold: pgtk_core::track::THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub steps: usize,
    pub warmup: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            steps: 1000,
            warmup: 50,
            height: 192,
            width: 256,
        }
    }
}

/// Every setting of every subcommand, resolved before the command runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed; generator, initialization and sampling seeds derive from it.
    pub seed: u64,
    /// Worker threads (0 = one per core).
    pub threads: usize,
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gen: GenConfig,
    pub data: DataSettings,
    pub eval: EvalSettings,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            gen: GenConfig::default(),
            data: DataSettings::default(),
            eval: EvalSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

/// Keys that mirror another key and are not written or accepted.
const DERIVED_KEYS: &[&str] = &["train.seed"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigFileError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {detail}")]
    Value { key: String, detail: String },
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl RunConfig {
    /// Dotted keys with their current values.
    pub fn entries(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten(
            "",
            &serde_json::to_value(self).expect("config serializes"),
            &mut out,
        );
        for k in DERIVED_KEYS {
            out.remove(*k);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved pgtk configuration\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {}\n", render(&v)));
        }
        s
    }

    /// Sets one dotted key from its text form.
    pub fn set(&mut self, key: &str, text: &str) -> Result<(), ConfigFileError> {
        self.set_all(&[(key.to_string(), text.to_string())])
    }

    pub fn set_all(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigFileError> {
        let mut root = serde_json::to_value(&*self).expect("config serializes");
        let current = self.entries();
        for (key, text) in pairs {
            let Some(old) = current.get(key) else {
                return Err(ConfigFileError::UnknownKey(key.clone()));
            };
            let text = text.trim();
            let value = match old {
                Value::String(_) => Value::String(text.to_string()),
                Value::Null => {
                    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
                }
                _ => serde_json::from_str(text).map_err(|e| ConfigFileError::Value {
                    key: key.clone(),
                    detail: e.to_string(),
                })?,
            };
            let mut slot = &mut root;
            for part in key.split('.') {
                slot = slot.get_mut(part).expect("key exists");
            }
            *slot = value;
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| ConfigFileError::Value {
            key: pairs
                .iter()
                .map(|(k, _)| k.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            detail: e.to_string(),
        })?;
        *self = cfg;
        self.train.seed = self.seed;
        Ok(())
    }

    /// Applies the `key = value` lines of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigFileError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigFileError::Syntax { line: i + 1 })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        self.set_all(&pairs)
    }

    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::write(dir.join(CONFIG_FILE), self.to_text())
    }
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("`{s}` is not key=value"))
}
