//! Plain `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment. Values are read as JSON when
//! they parse as JSON (numbers, booleans, arrays) and as bare strings
//! otherwise, then deserialized into the target struct over its defaults.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fsutil::{read_string, write_string};
use crate::metrics::KappaBins;
use crate::model::ModelConfig;
use crate::train::{AdamConfig, TrainConfig};

/// Parsed `key = value` pairs, consumed as they are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Overlays the keys of `defaults` present here, removing them.
    pub fn take<T: Serialize + DeserializeOwned>(&mut self, defaults: &T) -> Result<T> {
        let Value::Object(mut obj) = to_json(defaults)? else {
            return Err(Error::Config("configuration target is not a struct".into()));
        };
        let keys: Vec<String> = obj.keys().cloned().collect();
        for key in keys {
            if let Some(raw) = self.entries.remove(&key) {
                obj.insert(key, literal(&raw));
            }
        }
        serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fails on any key no target consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(_) => Err(Error::Config(format!(
                "unknown configuration keys: {}",
                self.entries.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))
}

fn literal(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Reads a whole struct from `key = value` text; missing keys keep defaults.
pub fn parse_struct<T: Serialize + DeserializeOwned + Default>(text: &str) -> Result<T> {
    let mut kv = KeyValues::parse(text)?;
    let out = kv.take(&T::default())?;
    kv.finish()?;
    Ok(out)
}

fn write_object(out: &mut String, obj: &Map<String, Value>, skip: &[&str]) {
    for (k, v) in obj {
        if skip.contains(&k.as_str()) {
            continue;
        }
        match v {
            Value::String(s) => out.push_str(&format!("{k} = {s}\n")),
            other => out.push_str(&format!("{k} = {other}\n")),
        }
    }
}

/// Writes every field of a flat struct as `key = value` lines.
pub fn struct_to_text<T: Serialize>(value: &T) -> Result<String> {
    let mut out = String::new();
    if let Value::Object(obj) = to_json(value)? {
        write_object(&mut out, &obj, &[]);
    }
    Ok(out)
}

/// Everything a training run needs besides data and graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Upper edges of the length-of-stay bins used for kappa.
    pub kappa_edges: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            kappa_edges: KappaBins::default().edges().to_vec(),
        }
    }
}

#[derive(Serialize, Deserialize, Default)]
struct Extra {
    kappa_edges: Vec<f64>,
}

impl RunConfig {
    /// Model, optimizer and trainer keys share one flat namespace.
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let base = Self::default();
        let model: ModelConfig = kv.take(&base.model)?;
        let adam: AdamConfig = kv.take(&base.train.adam)?;
        let mut train: TrainConfig = kv.take(&base.train)?;
        train.adam = adam;
        let extra: Extra = kv.take(&Extra {
            kappa_edges: base.kappa_edges,
        })?;
        kv.finish()?;
        let out = Self {
            model,
            train,
            kappa_edges: extra.kappa_edges,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(KeyValues::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.kappa_bins().map(|_| ())
    }

    pub fn kappa_bins(&self) -> Result<KappaBins> {
        KappaBins::new(self.kappa_edges.clone())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::from("# model\n");
        if let Value::Object(obj) = to_json(&self.model)? {
            write_object(&mut out, &obj, &[]);
        }
        out.push_str("# training\n");
        if let Value::Object(obj) = to_json(&self.train)? {
            write_object(&mut out, &obj, &["adam"]);
        }
        if let Value::Object(obj) = to_json(&self.train.adam)? {
            write_object(&mut out, &obj, &[]);
        }
        out.push_str("# evaluation\n");
        out.push_str(&format!("kappa_edges = {}\n", literal_list(&self.kappa_edges)));
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text()?)
    }
}

fn literal_list(xs: &[f64]) -> String {
    serde_json::to_string(xs).unwrap_or_else(|_| "[]".into())
}
