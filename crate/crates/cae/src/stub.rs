//! A test double for the candidate runtime shim.
//!
//! Candidate units are written in a tiny directive language, one
//! `key = value` per line (`#` starts a comment). The directives of all units
//! are merged at load time and select a reference behaviour:
//!
//! | key          | values                                                        |
//! |--------------|---------------------------------------------------------------|
//! | `method`     | `lisr` (default), `echo`                                      |
//! | `k`          | rank of the surrogate refresh, default 1                      |
//! | `select`     | `diagonal`, `row_norm`                                        |
//! | `srk`        | `inverse`, `solve`                                            |
//! | `woodbury`   | `keep`, `pinv`                                                |
//! | `correction` | `none`, `guarded`                                             |
//! | `guide`      | `baseline`, `distance`, `inverse_distance`, `inverse_square`, `squared_distance`, `uniform` |
//! | `tour`       | `nearest_neighbor`, `identity`                                |
//! | `raise`      | message raised on every call                                  |
//! | `sleep_ms`   | delay before answering a call                                 |
//! | `returns`    | `value`, `function` (an unserializable result)                |
//! | `note`       | free text, ignored                                            |

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use cae_core::floatfmt::Float;
use cae_core::quadratic::{lisr_solve, LisrOptions, QuadraticInstance, Variant};
use cae_core::tsp::{Algorithm, BaselineGuide};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::sandbox::protocol::{Message, Reply, UnitSource};

const ALLOWED: &[(&str, &[&str])] = &[
    ("method", &["lisr", "echo"]),
    ("select", &["diagonal", "row_norm"]),
    ("srk", &["inverse", "solve"]),
    ("woodbury", &["keep", "pinv"]),
    ("correction", &["none", "guarded"]),
    (
        "guide",
        &["baseline", "distance", "inverse_distance", "inverse_square", "squared_distance", "uniform"],
    ),
    ("tour", &["nearest_neighbor", "identity"]),
    ("returns", &["value", "function"]),
];

const FREE: &[&str] = &["raise", "note"];
const NUMERIC: &[&str] = &["k", "sleep_ms"];

#[derive(Debug, Clone)]
struct Directive {
    value: String,
    unit: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Program {
    entrypoint: String,
    directives: BTreeMap<String, Directive>,
}

impl Program {
    fn get(&self, key: &str) -> Option<&str> {
        self.directives.get(key).map(|d| d.value.as_str())
    }

    fn number(&self, key: &str, default: u64) -> u64 {
        self.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }

    fn traceback(&self, key: &str, message: &str) -> String {
        let (unit, line) = self
            .directives
            .get(key)
            .map_or((self.entrypoint.as_str(), 1), |d| (d.unit.as_str(), d.line));
        format!(
            "Traceback (most recent call last):\n  File \"<candidate>\", line {line}, in {unit}\n{message}"
        )
    }
}

fn load(units: &[UnitSource], entrypoint: &str) -> Result<Program, String> {
    let mut directives: BTreeMap<String, Directive> = BTreeMap::new();
    for unit in units {
        for (i, raw) in unit.source.lines().enumerate() {
            let line = i + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .filter(|(k, _)| !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
                .ok_or_else(|| format!("SyntaxError: invalid syntax ({}, line {line})", unit.name))?;
            if let Some((_, values)) = ALLOWED.iter().find(|(k, _)| *k == key) {
                if !values.contains(&value) {
                    return Err(format!("ValueError: invalid {key} `{value}` ({}, line {line})", unit.name));
                }
            } else if NUMERIC.contains(&key) {
                if value.parse::<u64>().is_err() {
                    return Err(format!("ValueError: {key} must be a non-negative integer ({}, line {line})", unit.name));
                }
            } else if !FREE.contains(&key) {
                return Err(format!("NameError: name '{key}' is not defined ({}, line {line})", unit.name));
            }
            if let Some(prev) = directives.get(key) {
                if prev.value != value && key != "note" {
                    return Err(format!(
                        "ValueError: conflicting {key} in {} and {} ({}, line {line})",
                        prev.unit, unit.name, unit.name
                    ));
                }
            }
            directives.insert(
                key.to_string(),
                Directive {
                    value: value.to_string(),
                    unit: unit.name.clone(),
                    line,
                },
            );
        }
    }
    if !units.iter().any(|u| u.name == entrypoint) {
        return Err(format!("NameError: entrypoint '{entrypoint}' is not defined"));
    }
    if directives.get("k").is_some_and(|d| d.value == "0") {
        return Err("ValueError: k must be at least 1".into());
    }
    Ok(Program {
        entrypoint: entrypoint.to_string(),
        directives,
    })
}

fn floats(xs: &[f64]) -> Vec<Float> {
    xs.iter().map(|&x| Float(x)).collect()
}

fn field<T: for<'de> Deserialize<'de>>(request: &Value, key: &str) -> Result<T, String> {
    let v = request.get(key).ok_or_else(|| format!("KeyError: '{key}'"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("TypeError: {key}: {e}"))
}

fn solve_quad(p: &Program, request: &Value) -> Result<Value, String> {
    let a_diag: Vec<Vec<f64>> = field(request, "A_diag")?;
    let b: Vec<Vec<f64>> = field(request, "b")?;
    let x0: Vec<f64> = field(request, "x0")?;
    let max_iter: usize = field(request, "max_iter")?;
    let tol: f64 = field(request, "tol")?;
    if p.get("method") == Some("echo") {
        return Ok(json!({"x": floats(&x0), "trace": []}));
    }
    let inst = QuadraticInstance::new(a_diag, b, 1.0, 0).map_err(|e| format!("ValueError: {e}"))?;
    let pick = |key: &str, b_value: &str| if p.get(key) == Some(b_value) { Variant::B } else { Variant::A };
    let opts = LisrOptions {
        k: p.number("k", 1) as usize,
        selection: pick("select", "row_norm"),
        srk: pick("srk", "solve"),
        woodbury: pick("woodbury", "pinv"),
        correction: p.get("correction") == Some("guarded"),
    };
    let out = lisr_solve(&inst, opts, &x0, max_iter, tol).map_err(|e| format!("FloatingPointError: {e}"))?;
    let trace: Vec<(Float, Float)> = out
        .trace
        .iter()
        .map(|t| (Float(t.t as f64), Float(t.objective)))
        .collect();
    Ok(json!({"x": floats(&out.x_best), "trace": trace}))
}

fn guide_tsp(p: &Program, request: &Value) -> Result<Value, String> {
    let name: String = field(request, "algorithm")?;
    let algorithm = Algorithm::parse(&name).ok_or_else(|| format!("ValueError: unknown algorithm {name}"))?;
    let edges: Vec<(usize, usize, f64)> = field(request, "edges")?;
    let scores: Vec<f64> = edges
        .iter()
        .map(|&(_, _, d)| match p.get("guide").unwrap_or("baseline") {
            "distance" => d,
            "inverse_distance" => 1.0 / d.max(1e-10),
            "inverse_square" => 1.0 / (d * d).max(1e-10),
            "squared_distance" => d * d,
            "uniform" => 1.0,
            _ => BaselineGuide::score(algorithm, d),
        })
        .collect();
    Ok(json!({ "scores": floats(&scores) }))
}

fn solve_tsp(p: &Program, request: &Value) -> Result<Value, String> {
    let coords: Vec<(f64, f64)> = field(request, "coords")?;
    let seed: u64 = field(request, "seed")?;
    let n = coords.len();
    if n == 0 {
        return Ok(json!({"tour": []}));
    }
    if p.get("tour") == Some("identity") {
        return Ok(json!({"tour": (0..n).collect::<Vec<_>>()}));
    }
    let dist = |a: usize, b: usize| ((coords[a].0 - coords[b].0).powi(2) + (coords[a].1 - coords[b].1).powi(2)).sqrt();
    let mut current = (seed % n as u64) as usize;
    let mut visited = vec![false; n];
    let mut tour = vec![current];
    visited[current] = true;
    while tour.len() < n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist(current, a).total_cmp(&dist(current, b)))
            .expect("unvisited city remains");
        visited[next] = true;
        tour.push(next);
        current = next;
    }
    Ok(json!({ "tour": tour }))
}

fn call(p: &Program, request: &Value) -> Reply {
    if let Some(ms) = p.get("sleep_ms").and_then(|v| v.parse().ok()) {
        std::thread::sleep(Duration::from_millis(ms));
    }
    if let Some(message) = p.get("raise") {
        return Reply::raised(message, p.traceback("raise", message));
    }
    if p.get("returns") == Some("function") {
        return Reply::error("unserializable");
    }
    let task = request.get("task").and_then(Value::as_str).unwrap_or("");
    let result = match task {
        "solve_quad" => solve_quad(p, request),
        "guide_tsp" => guide_tsp(p, request),
        "solve_tsp" => solve_tsp(p, request),
        other => Err(format!("ValueError: unsupported task '{other}'")),
    };
    match result {
        Ok(v) => Reply::response(v),
        Err(message) => {
            let traceback = p.traceback("method", &message);
            Reply::raised(message, traceback)
        }
    }
}

/// Serves the wire protocol until `shutdown` or end of input. Returns the
/// process exit code.
pub fn serve(input: impl BufRead, mut output: impl Write, debug: bool) -> i32 {
    let mut program: Option<Program> = None;
    for line in input.lines() {
        let Ok(line) = line else { return 1 };
        if debug {
            eprintln!("<< {line}");
        }
        let reply = match serde_json::from_str::<Message>(&line) {
            Err(_) => Reply::error("protocol"),
            Ok(Message::Shutdown) => return 0,
            Ok(Message::Load { units, entrypoint }) => match load(&units, &entrypoint) {
                Ok(p) => {
                    program = Some(p);
                    Reply::ok()
                }
                Err(e) => {
                    program = None;
                    Reply::error(e)
                }
            },
            Ok(Message::Call { request }) => match &program {
                None => Reply::error("not_loaded"),
                Some(p) => call(p, &request),
            },
        };
        let text = serde_json::to_string(&reply).expect("replies serialize");
        if debug {
            eprintln!(">> {text}");
        }
        if writeln!(output, "{text}").and_then(|_| output.flush()).is_err() {
            return 1;
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(lines: &[&str]) -> (i32, Vec<Value>) {
        let input = lines.join("\n");
        let mut out = Vec::new();
        let code = serve(input.as_bytes(), &mut out, false);
        let replies = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        (code, replies)
    }

    fn load_line(source: &str) -> String {
        json!({"op": "load", "units": [{"name": "main", "source": source}], "entrypoint": "main"}).to_string()
    }

    #[test]
    fn scripted_session() {
        let ok_load = load_line("method = echo");
        let bad_load = load_line("this is not a directive");
        let call = json!({"op": "call", "request": {"task": "solve_quad", "A_diag": [[1.0, 1.0]], "b": [[0.0, 0.0]], "x0": [1, 2], "max_iter": 5, "tol": 1e-9}}).to_string();
        let (code, replies) = session(&[
            &call,
            "{{{",
            &bad_load,
            &call,
            &ok_load,
            &call,
            r#"{"op":"shutdown"}"#,
            &call,
        ]);
        assert_eq!(code, 0);
        assert_eq!(replies.len(), 6);
        assert_eq!(replies[0], json!({"ok": false, "error": "not_loaded"}));
        assert_eq!(replies[1], json!({"ok": false, "error": "protocol"}));
        assert!(replies[2]["error"].as_str().unwrap().starts_with("SyntaxError"));
        assert_eq!(replies[3], json!({"ok": false, "error": "not_loaded"}));
        assert_eq!(replies[4], json!({"ok": true}));
        assert_eq!(replies[5]["response"]["x"], json!([1.0, 2.0]));
    }

    #[test]
    fn raising_and_unserializable() {
        let call = json!({"op": "call", "request": {"task": "guide_tsp"}}).to_string();
        let (_, r) = session(&[&load_line("raise = ZeroDivisionError: division by zero"), &call]);
        assert!(r[1]["traceback"].as_str().unwrap().contains("ZeroDivision"));
        let (_, r) = session(&[&load_line("returns = function"), &call]);
        assert_eq!(r[1], json!({"ok": false, "error": "unserializable"}));
    }

    #[test]
    fn lisr_reaches_optimum() {
        let (_, r) = session(&[
            &load_line("k = 2\ncorrection = guarded"),
            &json!({"op": "call", "request": {"task": "solve_quad", "A_diag": [[2.0, 4.0], [2.0, 4.0]], "b": [[-4.0, 4.0], [-4.0, 4.0]], "x0": [0, 0], "max_iter": 50, "tol": 1e-14}}).to_string(),
        ]);
        let x: Vec<f64> = serde_json::from_value(r[1]["response"]["x"].clone()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn conflicting_and_unknown_directives() {
        let units = vec![
            UnitSource { name: "a".into(), source: "k = 1".into() },
            UnitSource { name: "b".into(), source: "k = 2".into() },
        ];
        assert!(load(&units, "a").unwrap_err().contains("conflicting"));
        assert!(load(&units[..1], "zz").unwrap_err().starts_with("NameError"));
        let odd = [UnitSource { name: "a".into(), source: "frobnicate = 1".into() }];
        assert!(load(&odd, "a").unwrap_err().starts_with("NameError"));
    }
}
