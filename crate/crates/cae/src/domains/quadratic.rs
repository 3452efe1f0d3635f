use cae_core::floatfmt::Float;
use cae_core::model::ValidationRule;
use cae_core::quadratic::{generate_instance, QuadraticInstance};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Domain, Invoke, Metrics, Probe, ProbeSet, Shape};
use crate::sandbox::ExecError;

pub const DOMAIN_ID: &str = "quadratic";

/// Suboptimality recorded when a candidate produces nothing usable.
pub const SUBOPTIMALITY_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub n: usize,
    pub d: usize,
    pub xi: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceParams {
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_max_iter() -> usize {
    2000
}

fn default_tol() -> f64 {
    1e-12
}

fn default_rel_tol() -> f64 {
    1e-6
}

impl PerformanceParams {
    pub fn from_rule(rule: &ValidationRule) -> Result<Self, String> {
        let value = Value::Object(rule.params.clone().into_iter().collect());
        serde_json::from_value(value).map_err(|e| format!("rule `{}`: {e}", rule.rule_id))
    }
}

pub fn solve_request(inst: &QuadraticInstance, x0: &[f64], max_iter: usize, tol: f64) -> Value {
    json!({
        "task": "solve_quad",
        "A_diag": inst.a_diag,
        "b": inst.b,
        "x0": x0,
        "max_iter": max_iter,
        "tol": tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReply {
    pub x: Vec<f64>,
    pub trace: Vec<(f64, f64)>,
}

pub fn parse_reply(value: &Value) -> Result<SolveReply, String> {
    #[derive(Deserialize)]
    struct Raw {
        x: Vec<Float>,
        #[serde(default)]
        trace: Vec<(Float, Float)>,
    }
    let raw: Raw = serde_json::from_value(value.clone()).map_err(|e| format!("bad solve_quad reply: {e}"))?;
    Ok(SolveReply {
        x: raw.x.into_iter().map(|f| f.0).collect(),
        trace: raw.trace.into_iter().map(|(t, f)| (t.0, f.0)).collect(),
    })
}

/// `(iterations_to_tol, rel_suboptimality)` of a reply against the closed
/// form. Iterations are read from the reported trace but only credited when
/// the returned point itself is within tolerance.
pub fn score_reply(inst: &QuadraticInstance, reply: &SolveReply, max_iter: usize, rel_tol: f64) -> (f64, f64) {
    let sentinel = (max_iter + 1) as f64;
    let (_, f_star) = inst.closed_form_optimum();
    let scale = 1.0 + f_star.abs();
    let f_x = match inst.objective(&reply.x) {
        Ok(f) if f.is_finite() => f,
        _ => return (sentinel, SUBOPTIMALITY_SENTINEL),
    };
    let rel = ((f_x - f_star) / scale).max(0.0);
    if rel > rel_tol {
        return (sentinel, rel);
    }
    let iterations = reply
        .trace
        .iter()
        .find(|(_, f)| f - f_star <= rel_tol * scale)
        .map_or(sentinel, |(t, _)| *t);
    (iterations.min(sentinel), rel)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticDomain;

impl QuadraticDomain {
    fn reply_shape(d: usize) -> Shape {
        Shape::Object {
            fields: [("x".to_string(), Shape::Vector { len: d }), ("trace".to_string(), Shape::Pairs)]
                .into_iter()
                .collect(),
        }
    }
}

impl Domain for QuadraticDomain {
    fn id(&self) -> &str {
        DOMAIN_ID
    }

    fn contract(&self) -> String {
        "The entrypoint has signature lisr_k(x0, A_list, b_list, max_iter, tol) and minimises \
         f(x) = (1/n) sum_i (0.5 <x, A_i x> + <b_i, x>) for diagonal positive definite A_i. \
         It is called with {\"task\": \"solve_quad\", \"A_diag\": [[...]], \"b\": [[...]], \"x0\": [...], \
         \"max_iter\": int, \"tol\": float} and must return {\"x\": [...], \"trace\": [[t, f(x_t)], ...]}."
            .to_string()
    }

    fn entry_params(&self) -> &[&'static str] {
        &["x0", "A_list", "b_list", "max_iter", "tol"]
    }

    fn probes(&self) -> ProbeSet {
        let identity = QuadraticInstance::new(vec![vec![1.0; 4]; 4], vec![vec![0.0; 4]; 4], 1.0, 0).expect("valid identity");
        let seeded = generate_instance(4, 4, 2.0, 7).expect("valid parameters");
        ProbeSet {
            probes: vec![
                Probe {
                    probe_id: "identity".into(),
                    request: solve_request(&identity, &[1.0, 2.0, 3.0, 4.0], 50, 1e-12),
                    expected: Self::reply_shape(4),
                },
                Probe {
                    probe_id: "seeded".into(),
                    request: solve_request(&seeded, &[0.0; 4], 500, 1e-12),
                    expected: Self::reply_shape(4),
                },
            ],
        }
    }

    fn check_probe(&self, _probe: &Probe, response: &Value) -> Result<(), String> {
        let reply = parse_reply(response)?;
        if reply.x.iter().any(|v| !v.is_finite()) {
            return Err("non-finite iterate".into());
        }
        Ok(())
    }

    fn evaluate(&self, rule: &ValidationRule, invoke: &Invoke<'_>) -> Result<Metrics, ExecError> {
        let params = PerformanceParams::from_rule(rule).map_err(ExecError::ProtocolError)?;
        let mut metrics = Metrics::new();
        let mut total_iters = 0.0;
        let mut worst_rel: f64 = 0.0;
        for sc in &params.scenarios {
            let inst = generate_instance(sc.n, sc.d, sc.xi, sc.seed).map_err(|e| ExecError::ProtocolError(e.to_string()))?;
            let response = invoke(&solve_request(&inst, &vec![0.0; sc.d], params.max_iter, params.tol))?;
            let (iters, rel) = match parse_reply(&response) {
                Ok(reply) if reply.x.len() == sc.d => score_reply(&inst, &reply, params.max_iter, params.rel_tol),
                _ => ((params.max_iter + 1) as f64, SUBOPTIMALITY_SENTINEL),
            };
            metrics.insert(format!("obj:{}", sc.id), iters);
            total_iters += iters;
            worst_rel = worst_rel.max(rel);
        }
        metrics.insert("iterations_to_tol".into(), total_iters / params.scenarios.len().max(1) as f64);
        metrics.insert("rel_suboptimality".into(), worst_rel);
        Ok(metrics)
    }

    fn worst_case(&self, rule: &ValidationRule) -> Metrics {
        let (scenarios, max_iter) = match PerformanceParams::from_rule(rule) {
            Ok(p) => (p.scenarios, p.max_iter),
            Err(_) => (Vec::new(), default_max_iter()),
        };
        let sentinel = (max_iter + 1) as f64;
        let mut m: Metrics = scenarios.iter().map(|s| (format!("obj:{}", s.id), sentinel)).collect();
        m.insert("iterations_to_tol".into(), sentinel);
        m.insert("rel_suboptimality".into(), SUBOPTIMALITY_SENTINEL);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cae_core::quadratic::{lisr_solve, SolverVariant, Variant};

    #[test]
    fn scoring_against_closed_form() {
        let inst = generate_instance(6, 4, 2.0, 3).unwrap();
        let out = lisr_solve(&inst, SolverVariant::new(Variant::A, 2), &[0.0; 4], 500, 1e-14).unwrap();
        let reply = SolveReply {
            x: out.x_best.clone(),
            trace: out.trace.iter().map(|p| (p.t as f64, p.objective)).collect(),
        };
        let (iters, rel) = score_reply(&inst, &reply, 500, 1e-6);
        assert!(iters <= out.iterations as f64 && rel <= 1e-6);

        let echo = SolveReply {
            x: vec![0.0; 4],
            trace: vec![],
        };
        assert_eq!(score_reply(&inst, &echo, 500, 1e-6).0, 501.0);

        let lying = SolveReply {
            x: vec![0.0; 4],
            trace: vec![(1.0, f64::NEG_INFINITY)],
        };
        assert_eq!(score_reply(&inst, &lying, 500, 1e-6).0, 501.0);
    }

    #[test]
    fn reply_parsing_accepts_string_floats() {
        let r = parse_reply(&json!({"x": [1.5, "inf"], "trace": [[1, "nan"]]})).unwrap();
        assert_eq!(r.x[0], 1.5);
        assert!(r.x[1].is_infinite() && r.trace[0].1.is_nan());
    }
}
