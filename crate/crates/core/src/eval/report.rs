use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{DysemError, Result};
use crate::vector::SimilarityConfig;

/// How the pair scores of a report were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Restricted cosine over consensus-selected joint sets.
    Consensus,
    /// Plain cosine over every dimension of the representation vectors.
    FullDim,
    /// Restricted cosine over uniformly sampled dimensions.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomDims {
    pub n_dims: usize,
    pub seed: u64,
    pub per_pair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: Method,
    pub n_pairs: usize,
    /// `None` when the correlation is undefined (constant predictions or gold).
    pub spearman_x100: Option<f64>,
    /// Mean `|U(x, y)|` over pairs.
    pub avg_joint_dim: f64,
    /// Mean `|S(x)|` over the distinct texts referenced by the pairs.
    pub avg_semantic_set_size: f64,
    pub fallback_count: usize,
    pub config_echo: SimilarityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_dims: Option<RandomDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs_sha256: Option<String>,
}

impl EvalReport {
    pub fn to_canonical_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DysemError::Parse {
            line: e.line(),
            detail: e.to_string(),
        })
    }
}

/// Pretty JSON with sorted keys and every non-integer number printed with six
/// decimals, so equal reports are equal byte strings.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)
        .map_err(|e| DysemError::InvalidConfig(format!("unserializable value: {e}")))?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fixed6(n.as_f64().unwrap_or(0.0)));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            newline(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[key], depth + 1);
            }
            newline(out, depth);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}
