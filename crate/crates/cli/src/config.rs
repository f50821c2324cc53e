//! Run configuration as flat `key=value` text with dotted section prefixes.
//!
//! Values are set by walking the JSON form of [`RunConfig`], so every field
//! of the nested core configs is addressable without a hand-written table.
//! The leaf already present decides how a value is parsed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fairij::mitigate::{Search, Selection, DEFAULT_SCALES};
use fairij::{Activation, DataSchema, Error, FairnessMetricKind, IhvpConfig, MitigationConfig, MlpArchitecture, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

pub const SEED_ENV: &str = "FAIRIJ_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv,
    Moons,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub source: DataSource,
    /// CSV file read with the `schema` section.
    pub path: Option<String>,
    /// Rows generated for the synthetic sources.
    pub n: usize,
    pub noise: f64,
    pub separation: f64,
    /// Validation share, cut from the train rows.
    pub val_fraction: f64,
    /// Test share, used only when the data carries no split column.
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Csv,
            path: None,
            n: 10_000,
            noise: 0.1,
            separation: 1.0,
            val_fraction: 0.33,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![100],
            activation: Activation::Selu,
        }
    }
}

/// [`MitigationConfig`] without its IHVP part, which lives in `ihvp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigateSection {
    pub metric: FairnessMetricKind,
    pub selection: Selection,
    pub k_grid: Option<Vec<usize>>,
    pub scale_grid: Vec<f64>,
    pub search: Search,
}

impl Default for MitigateSection {
    fn default() -> Self {
        MitigateSection {
            metric: FairnessMetricKind::Dp,
            selection: Selection::FairnessOnly,
            k_grid: None,
            scale_grid: DEFAULT_SCALES.to_vec(),
            search: Search::Grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Global seed: data generation and splits. Trial `t` adds `t` to it and
    /// to the training and instance-order seeds.
    pub seed: u64,
    pub trials: usize,
    pub data: DataSection,
    pub schema: DataSchema,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub ihvp: IhvpConfig,
    pub mitigate: MitigateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            trials: 1,
            data: DataSection::default(),
            schema: DataSchema::adult(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            ihvp: IhvpConfig::default(),
            mitigate: MitigateSection::default(),
        }
    }
}

/// Keys whose value may be `none`.
const NULLABLE: &[&str] = &["data.path", "schema.split_column", "mitigate.k_grid"];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.train.validate()?;
        self.mitigation().validate()
    }

    pub fn architecture(&self, input_dim: usize) -> Result<MlpArchitecture> {
        MlpArchitecture::new(input_dim, self.model.hidden.clone(), self.model.activation)
    }

    pub fn mitigation(&self) -> MitigationConfig {
        let m = &self.mitigate;
        MitigationConfig {
            metric: m.metric,
            selection: m.selection,
            k_grid: m.k_grid.clone(),
            scale_grid: m.scale_grid.clone(),
            search: m.search,
            ihvp: self.ihvp.clone(),
        }
    }

    /// The configuration of trial `t`.
    pub fn for_trial(&self, t: usize) -> RunConfig {
        let t = t as u64;
        let mut c = self.clone();
        c.seed = self.seed.wrapping_add(t);
        c.train.seed = self.train.seed.wrapping_add(t);
        c.ihvp.instance_order_seed = self.ihvp.instance_order_seed.wrapping_add(t);
        c
    }

    /// Sorted `key=value` pairs covering every field.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn resolved_text(&self) -> String {
        self.resolved().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), scalar_text(other));
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.to_string(),
            // Debug output is the shortest string that parses back exactly
            None => format!("{:?}", n.as_f64().expect("finite config number")),
        },
        Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
        Value::Bool(b) => b.to_string(),
        Value::Object(_) => unreachable!("objects are flattened"),
    }
}

/// Parsed `key=value` lines, in file order. `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Builds a configuration from an optional file and ordered overrides.
///
/// `seed` falls back to `FAIRIJ_SEED` when neither source sets it, and
/// `train.seed` / `ihvp.instance_order_seed` follow `seed` unless set.
pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut pairs = match file {
        Some(path) => parse_pairs(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => Vec::new(),
    };
    pairs.extend(overrides.iter().cloned());
    let set = |pairs: &[(String, String)], key: &str| pairs.iter().any(|(k, _)| k == key);
    if !set(&pairs, "seed") {
        if let Ok(v) = std::env::var(SEED_ENV) {
            pairs.insert(0, ("seed".into(), v));
        }
    }
    let follow_seed: Vec<&str> = ["train.seed", "ihvp.instance_order_seed"].into_iter().filter(|k| !set(&pairs, k)).collect();

    let mut tree = serde_json::to_value(RunConfig::default()).expect("config serializes");
    for (k, v) in &pairs {
        assign(&mut tree, k, v)?;
    }
    let seed = tree["seed"].clone();
    for key in follow_seed {
        let (section, field) = key.split_once('.').expect("dotted key");
        tree[section][field] = seed.clone();
    }
    let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn assign(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key '{key}'"));
    let mut node = tree;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let map: &mut Map<String, Value> = node.as_object_mut().ok_or_else(unknown)?;
        let child = map.get_mut(part).ok_or_else(unknown)?;
        if parts.peek().is_none() {
            if child.is_object() {
                return Err(unknown());
            }
            *child = parse_value(key, child, raw)?;
            return Ok(());
        }
        node = child;
    }
    Err(unknown())
}

fn parse_value(key: &str, old: &Value, raw: &str) -> Result<Value> {
    let bad = |what: &str| Error::Config(format!("{key}: cannot parse '{raw}' as {what}"));
    if NULLABLE.contains(&key) && (raw.is_empty() || raw == "none") {
        return Ok(Value::Null);
    }
    let number = |s: &str, integer: bool| -> Result<Value> {
        if integer {
            s.parse::<u64>().map(Value::from).map_err(|_| bad("an unsigned integer"))
        } else {
            let f = s.parse::<f64>().map_err(|_| bad("a number"))?;
            Number::from_f64(f).map(Value::Number).ok_or_else(|| bad("a finite number"))
        }
    };
    match old {
        Value::Bool(_) => raw.parse::<bool>().map(Value::Bool).map_err(|_| bad("true or false")),
        Value::Number(n) => number(raw, n.is_u64()),
        Value::String(_) => Ok(Value::String(raw.into())),
        Value::Array(_) | Value::Null => {
            let tokens: Vec<&str> = raw.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
            let items: Result<Vec<Value>> = match old.as_array().and_then(|a| a.first()) {
                Some(Value::Number(n)) => tokens.iter().map(|t| number(t, n.is_u64())).collect(),
                Some(Value::String(_)) => Ok(tokens.iter().map(|t| Value::String((*t).into())).collect()),
                // empty defaults: integer lists for k_grid, strings elsewhere
                _ if key == "mitigate.k_grid" => tokens.iter().map(|t| number(t, true)).collect(),
                _ if key == "data.path" => return Ok(Value::String(raw.into())),
                _ => Ok(tokens.iter().map(|t| Value::String((*t).into())).collect()),
            };
            items.map(Value::Array)
        }
        Value::Object(_) => Err(bad("a value")),
    }
}
