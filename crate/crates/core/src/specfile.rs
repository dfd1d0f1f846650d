//! Method definition files (TOML) and coefficient-set JSON records.
//!
//! ```toml
//! label = "simos_case2_classical"
//! J = 4
//! K = 7
//! P = -1
//! frozen = { a0 = 0, a1 = "-1" }
//! drop_conditions = ["1"]
//! ```
//!
//! Frozen values may be integers, floats or `"n/d"` strings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::check_shape;
use crate::method::{CoefficientRef, CoefficientSet, FrozenValue, MethodSpec};
use crate::scalar::Scalar;

pub const BUNDLED: [(&str, &str); 5] = [
    ("numerov", include_str!("../specs/numerov.toml")),
    ("stormer", include_str!("../specs/stormer.toml")),
    ("two_step_k3p0", include_str!("../specs/two_step_k3p0.toml")),
    ("two_step_k1p1", include_str!("../specs/two_step_k1p1.toml")),
    ("simos_case2_classical", include_str!("../specs/simos_case2_classical.toml")),
];

const KEYS: [&str; 6] = ["label", "J", "K", "P", "frozen", "drop_conditions"];

/// Parse a method definition and check that its moment system is square.
pub fn parse_spec(text: &str) -> Result<MethodSpec> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
    if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown key `{key}`")));
    }
    let int = |key: &str| -> Result<i64> {
        match table.get(key) {
            Some(toml::Value::Integer(v)) => Ok(*v),
            Some(_) => Err(Error::Parse(format!("`{key}` must be an integer"))),
            None => Err(Error::Parse(format!("missing key `{key}`"))),
        }
    };
    let label = match table.get("label") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::Parse("`label` must be a string".into())),
        None => String::new(),
    };
    let j = int("J")?;
    if j < 0 {
        return Err(Error::InvalidSpec(format!("J = {j} must be positive")));
    }
    let narrow = |key: &str, v: i64| i32::try_from(v).map_err(|_| Error::InvalidSpec(format!("`{key}` = {v} is out of range")));
    let mut spec = MethodSpec::new(label, j as usize, narrow("K", int("K")?)?, narrow("P", int("P")?)?)?;
    if let Some(frozen) = table.get("frozen") {
        let frozen = frozen.as_table().ok_or_else(|| Error::Parse("`frozen` must be a table".into()))?;
        for (slot, value) in frozen {
            let slot: CoefficientRef = slot.parse()?;
            let value = match value {
                toml::Value::Integer(v) => FrozenValue::Ratio(*v, 1),
                toml::Value::Float(v) if v.is_finite() => FrozenValue::Float(*v),
                toml::Value::String(s) => s.parse()?,
                other => return Err(Error::Parse(format!("frozen {slot} has unsupported value `{other}`"))),
            };
            spec = spec.with_frozen(slot, value)?;
        }
    }
    if let Some(drops) = table.get("drop_conditions") {
        let drops = drops.as_array().ok_or_else(|| Error::Parse("`drop_conditions` must be a list".into()))?;
        for d in drops {
            let d = d.as_str().ok_or_else(|| Error::Parse("`drop_conditions` entries must be strings".into()))?;
            spec = spec.with_dropped(d);
        }
    }
    check_shape(&spec)?;
    Ok(spec)
}

/// Render a spec back to TOML; `parse_spec` reproduces it.
pub fn render_spec(spec: &MethodSpec) -> String {
    let mut out = format!(
        "label = {:?}\nJ = {}\nK = {}\nP = {}\n",
        spec.label, spec.step_number, spec.poly_degree, spec.tuning_level
    );
    if !spec.frozen.is_empty() {
        let entries: Vec<String> = spec
            .frozen
            .iter()
            .map(|(slot, v)| match v {
                FrozenValue::Ratio(n, 1) => format!("{slot} = {n}"),
                FrozenValue::Ratio(n, d) => format!("{slot} = \"{n}/{d}\""),
                FrozenValue::Float(x) => format!("{slot} = {x:?}"),
            })
            .collect();
        out += &format!("frozen = {{ {} }}\n", entries.join(", "));
    }
    if !spec.drop_conditions.is_empty() {
        let drops: Vec<String> = spec.drop_conditions.iter().map(|d| format!("{d:?}")).collect();
        out += &format!("drop_conditions = [{}]\n", drops.join(", "));
    }
    out
}

pub fn bundled(name: &str) -> Option<MethodSpec> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| parse_spec(text).expect("bundled spec is valid"))
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Load a spec from `arg`: an existing file path, otherwise a bundled name.
pub fn load_spec(arg: &str) -> Result<MethodSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return parse_spec(&text);
    }
    bundled(arg).ok_or_else(|| Error::NotFound(format!("{arg}: no such file or bundled spec")))
}

/// JSON export of a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    #[serde(rename = "J")]
    pub step_number: usize,
    pub theta: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CoefficientRecord {
    pub fn from_set<T: Scalar>(cs: &CoefficientSet<T>) -> Self {
        Self {
            step_number: cs.step_number,
            theta: cs.theta.to_f64_lossy(),
            a: cs.a.iter().map(|v| v.to_f64_lossy()).collect(),
            b: cs.b.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn to_set(&self) -> Result<CoefficientSet<f64>> {
        CoefficientSet::new(self.step_number, self.theta, self.a.clone(), self.b.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
