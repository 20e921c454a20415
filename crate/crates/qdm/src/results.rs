//! The results document written by `fit` and read by the other commands.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qdm_core::assessment::FitResult;
use qdm_core::model::ModelSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub format_version: u32,
    /// The model exactly as fitted.
    pub model: ModelSpec,
    pub graph_sha256: String,
    pub data_sha256: String,
    pub result: FitResult,
}

impl ResultsDocument {
    pub fn new(model: ModelSpec, graph_sha256: String, data_sha256: String, result: FitResult) -> Self {
        ResultsDocument { format_version: FORMAT_VERSION, model, graph_sha256, data_sha256, result }
    }

    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        check_finite(&v, "")?;
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        match v.get("format_version").and_then(Value::as_u64) {
            Some(x) if x == FORMAT_VERSION as u64 => {}
            Some(x) => bail!("results format version {x} is not supported (expected {FORMAT_VERSION})"),
            None => bail!("not a results document: no format_version"),
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("results {}", path.display()))
    }
}

/// Non-finite floats serialise as `null`; only an unavailable `sd` may be null.
fn check_finite(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Null if !path.ends_with(".sd") => bail!("non-finite value at {path}"),
        Value::Array(a) => a.iter().enumerate().try_for_each(|(i, x)| check_finite(x, &format!("{path}[{i}]"))),
        Value::Object(o) => o.iter().try_for_each(|(k, x)| check_finite(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}
