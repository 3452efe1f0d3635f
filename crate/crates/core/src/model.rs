//! Value types for problems, code solutions, validation rules and reports.
//!
//! Everything here is immutable after construction and serializes to JSON
//! with snake_case field names. Digests are lowercase hex SHA-256 over the
//! canonical serialization (sorted keys, no insignificant whitespace).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::floatfmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unit `{from}` depends on undefined unit `{to}`")]
    DanglingReference { from: String, to: String },
    #[error("entrypoint `{0}` is not a unit of the solution")]
    MissingEntrypoint(String),
    #[error("duplicate unit name `{0}`")]
    DuplicateUnit(String),
    #[error("unit `{0}` has empty source")]
    EmptySource(String),
    #[error("problem has no objectives")]
    EmptyObjectives,
    #[error("objective weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("objective `{0}` has a negative or non-finite weight")]
    BadWeight(String),
    #[error("constraint `{constraint}` references unknown rule `{rule}`")]
    UnknownRule { constraint: String, rule: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateRule(String),
    #[error("rule `{0}` is blocking but of performance kind")]
    BlockingPerformanceRule(String),
    #[error("origin {origin} requires {expected} parents, got {got}")]
    OriginParents {
        origin: Origin,
        expected: &'static str,
        got: usize,
    },
    #[error("metric `{0}` missing from report")]
    MissingMetric(String),
}

/// Canonical JSON text: object keys sorted, no whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("model types always serialize");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub metric_id: String,
    pub direction: Direction,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub constraint_id: String,
    pub description: String,
    pub rule_id: String,
}

/// Requirements text, weighted objectives and constraints bound to one
/// evaluation domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub requirements: String,
    pub objectives: Vec<Objective>,
    pub constraints: Vec<Constraint>,
    pub domain_id: String,
}

impl ProblemSpec {
    /// Checks the objective invariants and that every constraint points at a
    /// rule in `rules`.
    pub fn validate(&self, rules: &RuleSet) -> Result<(), ModelError> {
        if self.objectives.is_empty() {
            return Err(ModelError::EmptyObjectives);
        }
        let mut sum = 0.0;
        for objective in &self.objectives {
            if !objective.weight.is_finite() || objective.weight < 0.0 {
                return Err(ModelError::BadWeight(objective.metric_id.clone()));
            }
            sum += objective.weight;
        }
        if libm::fabs(sum - 1.0) > 1e-12 {
            return Err(ModelError::WeightSum(sum));
        }
        for constraint in &self.constraints {
            if rules.get(&constraint.rule_id).is_none() {
                return Err(ModelError::UnknownRule {
                    constraint: constraint.constraint_id.clone(),
                    rule: constraint.rule_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Weighted sum of the objective metrics, negating maximized ones so that
/// lower is always better.
pub fn scalarize_fitness(
    metrics: &BTreeMap<String, f64>,
    spec: &ProblemSpec,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for objective in &spec.objectives {
        let value = *metrics
            .get(&objective.metric_id)
            .ok_or_else(|| ModelError::MissingMetric(objective.metric_id.clone()))?;
        let signed = match objective.direction {
            Direction::Minimize => value,
            Direction::Maximize => -value,
        };
        total += objective.weight * signed;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    #[serde(default)]
    pub params: Vec<Param>,
    #[serde(default)]
    pub returns: String,
}

impl Signature {
    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub name: String,
    #[serde(default)]
    pub signature: Signature,
    pub source: String,
    #[serde(default)]
    pub doc: String,
    #[serde(default)]
    pub origin_hash: String,
}

impl FunctionUnit {
    pub fn new(
        name: impl Into<String>,
        signature: Signature,
        source: impl Into<String>,
        doc: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let mut unit = FunctionUnit {
            name: name.into(),
            signature,
            source: source.into(),
            doc: doc.into(),
            origin_hash: String::new(),
        };
        if unit.source.trim().is_empty() {
            return Err(ModelError::EmptySource(unit.name));
        }
        unit.origin_hash = unit.content_hash();
        Ok(unit)
    }

    /// Digest of (name, signature, source). Documentation does not count.
    pub fn content_hash(&self) -> String {
        #[derive(Serialize)]
        struct Content<'a> {
            name: &'a str,
            signature: &'a Signature,
            source: &'a str,
        }
        sha256_hex(
            canonical_json(&Content {
                name: &self.name,
                signature: &self.signature,
                source: &self.source,
            })
            .as_bytes(),
        )
    }

    pub fn with_source(&self, source: impl Into<String>) -> Result<Self, ModelError> {
        FunctionUnit::new(
            self.name.clone(),
            self.signature.clone(),
            source,
            self.doc.clone(),
        )
    }
}

/// `from` depends on `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

/// A set of named function units with a dependency DAG and an entrypoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSolution {
    pub units: BTreeMap<String, FunctionUnit>,
    #[serde(default)]
    pub deps: BTreeSet<Edge>,
    pub entrypoint: String,
}

impl CodeSolution {
    /// Builds and validates a solution. Unit hashes are recomputed.
    pub fn new(
        units: impl IntoIterator<Item = FunctionUnit>,
        deps: impl IntoIterator<Item = Edge>,
        entrypoint: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for mut unit in units {
            if unit.source.trim().is_empty() {
                return Err(ModelError::EmptySource(unit.name));
            }
            unit.origin_hash = unit.content_hash();
            let name = unit.name.clone();
            if map.insert(name.clone(), unit).is_some() {
                return Err(ModelError::DuplicateUnit(name));
            }
        }
        let solution = CodeSolution {
            units: map,
            deps: deps.into_iter().collect(),
            entrypoint: entrypoint.into(),
        };
        solution.validate()?;
        Ok(solution)
    }

    /// Recomputes unit hashes and re-keys units by their own names, as needed
    /// after parsing untrusted JSON.
    pub fn normalized(mut self) -> Result<Self, ModelError> {
        let units = core::mem::take(&mut self.units);
        let mut map = BTreeMap::new();
        for (_, mut unit) in units {
            if unit.source.trim().is_empty() {
                return Err(ModelError::EmptySource(unit.name));
            }
            unit.origin_hash = unit.content_hash();
            let name = unit.name.clone();
            if map.insert(name.clone(), unit).is_some() {
                return Err(ModelError::DuplicateUnit(name));
            }
        }
        self.units = map;
        self.validate()?;
        Ok(self)
    }

    /// Entrypoint present, no dangling edge, no cycle, hashes consistent.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_references()?;
        self.dependency_order()?;
        Ok(())
    }

    pub fn check_references(&self) -> Result<(), ModelError> {
        if !self.units.contains_key(&self.entrypoint) {
            return Err(ModelError::MissingEntrypoint(self.entrypoint.clone()));
        }
        for edge in &self.deps {
            for end in [&edge.from, &edge.to] {
                if !self.units.contains_key(end) {
                    return Err(ModelError::DanglingReference {
                        from: edge.from.clone(),
                        to: end.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Topological order (dependencies first), ties broken by name.
    pub fn dependency_order(&self) -> Result<Vec<String>, ModelError> {
        let mut pending: BTreeMap<&str, usize> =
            self.units.keys().map(|k| (k.as_str(), 0)).collect();
        let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for edge in &self.deps {
            if let Some(count) = pending.get_mut(edge.from.as_str()) {
                *count += 1;
            }
            dependents
                .entry(edge.to.as_str())
                .or_default()
                .push(edge.from.as_str());
        }
        let mut ready: BTreeSet<&str> = pending
            .iter()
            .filter(|(_, &c)| c == 0)
            .map(|(&n, _)| n)
            .collect();
        let mut order = Vec::with_capacity(self.units.len());
        while let Some(next) = ready.pop_first() {
            order.push(next.to_string());
            pending.remove(next);
            if let Some(children) = dependents.get(next) {
                for child in children {
                    if let Some(count) = pending.get_mut(child) {
                        *count -= 1;
                        if *count == 0 {
                            ready.insert(child);
                        }
                    }
                }
            }
        }
        if !pending.is_empty() {
            return Err(ModelError::Cycle(self.find_cycle(&pending)));
        }
        Ok(order)
    }

    fn find_cycle(&self, stuck: &BTreeMap<&str, usize>) -> Vec<String> {
        // every stuck node has an outgoing edge to another stuck node
        let next_of = |node: &str| -> Option<&str> {
            self.deps
                .iter()
                .find(|e| e.from == node && stuck.contains_key(e.to.as_str()))
                .map(|e| e.to.as_str())
        };
        let start = match stuck.keys().next() {
            Some(s) => *s,
            None => return Vec::new(),
        };
        let mut path: Vec<&str> = Vec::new();
        let mut node = start;
        loop {
            if let Some(pos) = path.iter().position(|n| *n == node) {
                let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                cycle.push(node.to_string());
                return cycle;
            }
            path.push(node);
            match next_of(node) {
                Some(n) => node = n,
                None => return path.iter().map(|s| s.to_string()).collect(),
            }
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(canonical_json(self).as_bytes())
    }

    /// Same solution with one unit's source replaced.
    pub fn with_unit_source(&self, name: &str, source: &str) -> Result<Self, ModelError> {
        let unit = self
            .units
            .get(name)
            .ok_or_else(|| ModelError::MissingEntrypoint(name.to_string()))?;
        let mut next = self.clone();
        next.units.insert(name.to_string(), unit.with_source(source)?);
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Static,
    Functional,
    Performance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Blocking,
    Scoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRule {
    pub rule_id: String,
    pub kind: RuleKind,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub severity: Severity,
}

impl ValidationRule {
    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(|v| v.as_str())
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.as_f64())
    }
}

/// Ordered, id-unique rule list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ValidationRule>", into = "Vec<ValidationRule>")]
pub struct RuleSet(Vec<ValidationRule>);

impl RuleSet {
    pub fn new(rules: Vec<ValidationRule>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for rule in &rules {
            if !seen.insert(rule.rule_id.as_str()) {
                return Err(ModelError::DuplicateRule(rule.rule_id.clone()));
            }
            if rule.severity == Severity::Blocking && rule.kind == RuleKind::Performance {
                return Err(ModelError::BlockingPerformanceRule(rule.rule_id.clone()));
            }
        }
        Ok(RuleSet(rules))
    }

    pub fn get(&self, rule_id: &str) -> Option<&ValidationRule> {
        self.0.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ValidationRule> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<ValidationRule>> for RuleSet {
    type Error = ModelError;
    fn try_from(rules: Vec<ValidationRule>) -> Result<Self, Self::Error> {
        RuleSet::new(rules)
    }
}

impl From<RuleSet> for Vec<ValidationRule> {
    fn from(set: RuleSet) -> Self {
        set.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub rule_id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_rule: Vec<RuleVerdict>,
    #[serde(with = "floatfmt::map")]
    pub metrics: BTreeMap<String, f64>,
    /// `+inf` when any blocking rule failed; serialized as `"inf"`.
    #[serde(with = "floatfmt::scalar")]
    pub fitness: f64,
    #[serde(default)]
    pub wall_time: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.fitness.is_finite()
    }

    pub fn failed_rules(&self) -> impl Iterator<Item = &RuleVerdict> {
        self.per_rule.iter().filter(|v| !v.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Functional,
    Structural,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Seed => "seed",
            Origin::Functional => "functional",
            Origin::Structural => "structural",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub solution: CodeSolution,
    pub report: Option<ValidationReport>,
    pub generation: u32,
    pub parents: Vec<String>,
    pub origin: Origin,
}

impl Individual {
    pub fn new(
        solution: CodeSolution,
        generation: u32,
        parents: Vec<String>,
        origin: Origin,
    ) -> Result<Self, ModelError> {
        let (ok, expected) = match origin {
            Origin::Seed => (parents.is_empty(), "0"),
            Origin::Functional => (parents.len() == 1, "1"),
            Origin::Structural => (parents.len() >= 2, ">= 2"),
        };
        if !ok {
            return Err(ModelError::OriginParents {
                origin,
                expected,
                got: parents.len(),
            });
        }
        Ok(Individual {
            id: solution.digest(),
            solution,
            report: None,
            generation,
            parents,
            origin,
        })
    }

    pub fn with_report(mut self, report: ValidationReport) -> Self {
        self.report = Some(report);
        self
    }

    /// Scalar fitness; unvalidated individuals sort last.
    pub fn fitness(&self) -> f64 {
        match &self.report {
            Some(r) if r.fitness.is_finite() => r.fitness,
            _ => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(name: &str) -> FunctionUnit {
        FunctionUnit::new(name, Signature::default(), "body", "").unwrap()
    }

    fn raw(names: &[&str], edges: &[(&str, &str)]) -> CodeSolution {
        CodeSolution {
            units: names.iter().map(|n| (n.to_string(), unit(n))).collect(),
            deps: edges.iter().map(|(a, b)| Edge::new(*a, *b)).collect(),
            entrypoint: names[0].to_string(),
        }
    }

    fn spec(objectives: Vec<Objective>) -> ProblemSpec {
        ProblemSpec {
            requirements: "minimize".into(),
            objectives,
            constraints: vec![],
            domain_id: "quadratic".into(),
        }
    }

    fn obj(id: &str, direction: Direction, weight: f64) -> Objective {
        Objective {
            metric_id: id.into(),
            direction,
            weight,
        }
    }

    #[test]
    fn order_follows_single_edge() {
        assert_eq!(raw(&["a", "b"], &[("b", "a")]).dependency_order().unwrap(), ["a", "b"]);
        assert_eq!(raw(&["b", "a"], &[("a", "b")]).dependency_order().unwrap(), ["b", "a"]);
    }

    #[test]
    fn order_ties_are_lexicographic() {
        assert_eq!(raw(&["c", "a", "b"], &[]).dependency_order().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn cycle_is_reported() {
        let err = raw(&["a", "b"], &[("a", "b"), ("b", "a")])
            .dependency_order()
            .unwrap_err();
        match err {
            ModelError::Cycle(path) => {
                assert_eq!(path.first(), path.last());
                assert!(path.contains(&"a".to_string()) && path.contains(&"b".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn construction_rejects_bad_graphs() {
        let dangling = CodeSolution::new([unit("a")], [Edge::new("a", "helper")], "a");
        assert!(matches!(dangling, Err(ModelError::DanglingReference { .. })));
        let no_entry = CodeSolution::new([unit("a")], [], "main");
        assert!(matches!(no_entry, Err(ModelError::MissingEntrypoint(_))));
        let dup = CodeSolution::new([unit("a"), unit("a")], [], "a");
        assert!(matches!(dup, Err(ModelError::DuplicateUnit(_))));
        assert!(matches!(
            FunctionUnit::new("a", Signature::default(), "  ", ""),
            Err(ModelError::EmptySource(_))
        ));
    }

    #[test]
    fn scalarize_examples() {
        let m = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect();
        let s = spec(vec![obj("m", Direction::Minimize, 1.0)]);
        assert_eq!(scalarize_fitness(&m(&[("m", 5.0)]), &s).unwrap(), 5.0);
        let s = spec(vec![obj("m", Direction::Maximize, 1.0)]);
        assert_eq!(scalarize_fitness(&m(&[("m", 5.0)]), &s).unwrap(), -5.0);
        let s = spec(vec![
            obj("a", Direction::Minimize, 0.5),
            obj("b", Direction::Minimize, 0.5),
        ]);
        assert_eq!(scalarize_fitness(&m(&[("a", 4.0), ("b", 6.0)]), &s).unwrap(), 5.0);
        assert_eq!(
            scalarize_fitness(&m(&[("a", 4.0)]), &s),
            Err(ModelError::MissingMetric("b".into()))
        );
    }

    #[test]
    fn spec_invariants() {
        let rules = RuleSet::new(vec![]).unwrap();
        assert_eq!(spec(vec![]).validate(&rules), Err(ModelError::EmptyObjectives));
        assert!(matches!(
            spec(vec![obj("a", Direction::Minimize, 0.7)]).validate(&rules),
            Err(ModelError::WeightSum(_))
        ));
        let mut s = spec(vec![obj("a", Direction::Minimize, 1.0)]);
        s.constraints.push(Constraint {
            constraint_id: "c".into(),
            description: "must load".into(),
            rule_id: "missing".into(),
        });
        assert!(matches!(s.validate(&rules), Err(ModelError::UnknownRule { .. })));
    }

    #[test]
    fn rule_set_invariants() {
        let rule = |id: &str, kind, severity| ValidationRule {
            rule_id: id.into(),
            kind,
            params: BTreeMap::new(),
            severity,
        };
        assert!(RuleSet::new(vec![rule("p", RuleKind::Performance, Severity::Blocking)]).is_err());
        assert!(RuleSet::new(vec![
            rule("s", RuleKind::Static, Severity::Blocking),
            rule("s", RuleKind::Functional, Severity::Blocking),
        ])
        .is_err());
    }

    #[test]
    fn origin_parent_counts() {
        let s = raw(&["a"], &[]);
        assert!(Individual::new(s.clone(), 0, vec![], Origin::Seed).is_ok());
        assert!(Individual::new(s.clone(), 0, vec!["x".into()], Origin::Seed).is_err());
        assert!(Individual::new(s.clone(), 1, vec![], Origin::Functional).is_err());
        assert!(Individual::new(s.clone(), 1, vec!["x".into()], Origin::Structural).is_err());
        let two = vec!["x".into(), "y".into()];
        assert!(Individual::new(s, 1, two, Origin::Structural).is_ok());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": {"d": [1, 2], "c": null}}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"d":[1,2]},"b":1}"#);
    }

    #[test]
    fn infinite_fitness_serializes_as_string() {
        let report = ValidationReport {
            per_rule: vec![],
            metrics: BTreeMap::new(),
            fitness: f64::INFINITY,
            wall_time: 0.0,
        };
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains(r#""fitness":"inf""#));
        let back: ValidationReport = serde_json::from_str(&text).unwrap();
        assert!(back.fitness.is_infinite() && !back.is_valid());
    }
}
