//! Evaluation domains bound to a problem spec by `domain_id`.

pub mod quadratic;
pub mod tsp;

use std::collections::BTreeMap;
use std::path::Path;

use cae_core::model::ValidationRule;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::sandbox::ExecError;

pub type Metrics = BTreeMap<String, f64>;

/// Expected structure of a response value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Numbers, or the strings "inf", "-inf", "nan".
    Vector { len: usize },
    /// `[[t, f], ...]` with numeric entries.
    Pairs,
    Permutation { len: usize },
    Object { fields: BTreeMap<String, Shape> },
}

fn is_number(v: &Value) -> bool {
    v.is_number() || matches!(v.as_str(), Some("inf" | "-inf" | "nan"))
}

impl Shape {
    pub fn check(&self, value: &Value) -> Result<(), String> {
        match self {
            Shape::Vector { len } => {
                let items = value.as_array().ok_or("expected an array")?;
                if items.len() != *len {
                    return Err(format!("expected {len} entries, got {}", items.len()));
                }
                if !items.iter().all(is_number) {
                    return Err("non-numeric entry".into());
                }
                Ok(())
            }
            Shape::Pairs => {
                let items = value.as_array().ok_or("expected an array of pairs")?;
                for item in items {
                    match item.as_array() {
                        Some(p) if p.len() == 2 && p.iter().all(is_number) => {}
                        _ => return Err("expected [t, value] pairs".into()),
                    }
                }
                Ok(())
            }
            Shape::Permutation { len } => {
                let items = value.as_array().ok_or("expected an array")?;
                let mut seen = vec![false; *len];
                for v in items {
                    let i = v.as_u64().ok_or("expected integer city indices")? as usize;
                    if i >= *len || std::mem::replace(&mut seen[i], true) {
                        return Err("not a permutation".into());
                    }
                }
                if items.len() != *len {
                    return Err("not a permutation".into());
                }
                Ok(())
            }
            Shape::Object { fields } => {
                let obj = value.as_object().ok_or("expected an object")?;
                for (name, shape) in fields {
                    let v = obj.get(name).ok_or_else(|| format!("missing field `{name}`"))?;
                    shape.check(v).map_err(|e| format!("{name}: {e}"))?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub probe_id: String,
    pub request: Value,
    pub expected: Shape,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
}

/// Calls the candidate under evaluation with one request.
pub type Invoke<'a> = dyn Fn(&Value) -> Result<Value, ExecError> + Sync + 'a;

pub trait Domain: Send + Sync {
    fn id(&self) -> &str;

    /// Request/response contract shown to the model.
    fn contract(&self) -> String;

    /// Parameter names the entrypoint signature must declare.
    fn entry_params(&self) -> &[&'static str];

    fn probes(&self) -> ProbeSet;

    /// Checks beyond shape, e.g. finiteness.
    fn check_probe(&self, _probe: &Probe, _response: &Value) -> Result<(), String> {
        Ok(())
    }

    /// Scores the candidate for one performance rule.
    fn evaluate(&self, rule: &ValidationRule, invoke: &Invoke<'_>) -> Result<Metrics, ExecError>;

    /// Metrics recorded when evaluation fails or times out.
    fn worst_case(&self, rule: &ValidationRule) -> Metrics;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("no evaluation domain `{0}`")]
    Unknown(String),
}

/// The built-in domains. `base_dir` resolves relative file references in
/// rule parameters.
pub fn domain_for(domain_id: &str, base_dir: &Path) -> Result<Box<dyn Domain>, DomainError> {
    match domain_id {
        quadratic::DOMAIN_ID => Ok(Box::new(quadratic::QuadraticDomain)),
        tsp::DOMAIN_ID => Ok(Box::new(tsp::TspDomain::new(base_dir))),
        other => Err(DomainError::Unknown(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn shapes() {
        let s = Shape::Object {
            fields: [
                ("x".to_string(), Shape::Vector { len: 2 }),
                ("trace".to_string(), Shape::Pairs),
            ]
            .into_iter()
            .collect(),
        };
        assert!(s.check(&json!({"x": [1, "nan"], "trace": [[1, 2.5]]})).is_ok());
        assert!(s.check(&json!({"x": [1], "trace": []})).is_err());
        assert!(s.check(&json!({"x": [1, 2]})).is_err());
        assert!(s.check(&json!({"x": [1, 2], "trace": [[1]]})).is_err());
        let p = Shape::Permutation { len: 3 };
        assert!(p.check(&json!([2, 0, 1])).is_ok());
        assert!(p.check(&json!([0, 0, 1])).is_err());
        assert!(p.check(&json!([0, 1])).is_err());
    }
}
