//! Experiment configuration: flat `key = value` text or a JSON object, with
//! every key also settable as a command-line flag.
//!
//! Unset keys stay `None` and each command fills in its own default, so a
//! written config only carries what was chosen explicitly.

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{invalid, Error, Result};
use crate::qec::CodeFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub cycles: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub r_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correction: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub families: Option<Vec<String>>,
    /// `chi` or `loss`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knob: Option<String>,
    /// Knob values of a noise sweep.
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub gammas: Option<Vec<f64>>,
    /// `natural` or `db`: how r is read in the Gaussian envelope width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub inputs: Option<Vec<String>>,
    /// Fixed Hadamard outcome; sampled from `seed` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wigner: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub x_range: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", deserialize_with = "one_or_many")]
    pub p_range: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    }))
}

/// A bare value: JSON if it parses, a list if it has commas, else a string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(parse_value).collect());
    }
    Value::String(raw.to_string())
}

impl ExperimentConfig {
    /// `key = value` lines; `#` starts a comment line, dashes in keys read as
    /// underscores.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = Map::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key = value", i + 1)))?;
            map.insert(k.trim().replace('-', "_"), parse_value(v));
        }
        Self::from_value(Value::Object(map))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config json: {e}")))?;
        Self::from_value(v)
    }

    /// JSON when the text is an object, key-value otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_kv(text)
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_kv(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config is a struct")
        };
        map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(&self, over: &Self) -> Self {
        let (Value::Object(mut base), Value::Object(top)) =
            (serde_json::to_value(self).expect("config serializes"), serde_json::to_value(over).expect("config serializes"))
        else {
            unreachable!("config is a struct")
        };
        base.extend(top);
        serde_json::from_value(Value::Object(base)).expect("merged config deserializes")
    }

    /// Range and enum checks on every key that is set.
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if mu > 1 {
                return invalid(format!("mu must be 0 or 1, got {mu}"));
            }
        }
        for &r in self.r_db.iter().flatten() {
            if !r.is_finite() || r < 0.0 {
                return invalid(format!("r_db must be finite and non-negative, got {r}"));
            }
        }
        if matches!(&self.r_db, Some(v) if v.is_empty()) || matches!(&self.cycles, Some(v) if v.is_empty()) {
            return invalid("r_db and cycles lists must not be empty");
        }
        if let Some(n) = self.n_max {
            if n < 20 {
                return invalid(format!("n_max must be at least 20, got {n}"));
            }
        }
        if let Some(t) = self.beta_tol {
            if !(t > 0.0) {
                return invalid("beta_tol must be positive");
            }
        }
        if let Some(k) = &self.knob {
            if k != "chi" && k != "loss" {
                return invalid(format!("knob must be chi or loss, got {k:?}"));
            }
        }
        for &v in self.values.iter().flatten() {
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("noise knob values must be finite and non-negative, got {v}"));
            }
        }
        if self.realizations == Some(0) {
            return invalid("realizations must be positive");
        }
        for &g in self.gammas.iter().flatten() {
            if !(0.0..1.0).contains(&g) {
                return invalid(format!("gamma must lie in [0, 1), got {g}"));
            }
        }
        if let Some(e) = &self.envelope {
            if e != "natural" && e != "db" {
                return invalid(format!("envelope must be natural or db, got {e:?}"));
            }
        }
        if let Some(o) = self.outcome {
            if o > 1 {
                return invalid(format!("outcome must be 0 or 1, got {o}"));
            }
        }
        for inp in self.inputs.iter().flatten() {
            if !["zero", "one", "plus"].contains(&inp.as_str()) {
                return invalid(format!("hadamard input must be zero, one or plus, got {inp:?}"));
            }
        }
        for (name, r) in [("x_range", &self.x_range), ("p_range", &self.p_range)] {
            if let Some(r) = r {
                if r.len() != 2 || !(r[0] < r[1]) || !r.iter().all(|v| v.is_finite()) {
                    return invalid(format!("{name} must be two increasing finite numbers"));
                }
            }
        }
        if matches!(self.points, Some(p) if p < 2) {
            return invalid("points must be at least 2");
        }
        Ok(())
    }

    /// Families as code families (qec) or protocol curves (sweep-q); names
    /// are checked by the command that uses them.
    pub fn code_families(&self) -> Result<Option<Vec<CodeFamily>>> {
        self.families.as_ref().map(|v| v.iter().map(|s| s.parse()).collect()).transpose()
    }
}
