use std::collections::BTreeSet;

use cae_core::floatfmt;
use cae_core::model::{CodeSolution, Direction, Edge, FunctionUnit, Individual, ModelError, Signature};
use cae_core::evolution::ReflectionMemory;
use serde::{Deserialize, Serialize};

use crate::gateway::extract_code;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub metric_id: String,
    pub direction: Direction,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStub {
    pub name: String,
    #[serde(default)]
    pub signature: Signature,
    #[serde(default)]
    pub purpose: String,
    #[serde(default)]
    pub entrypoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredUnderstanding {
    pub restated_requirements: String,
    pub identified_objectives: Vec<MetricDescriptor>,
    #[serde(default)]
    pub identified_constraints: Vec<String>,
    pub suggested_decomposition: Vec<UnitStub>,
}

impl StructuredUnderstanding {
    pub fn validate(&self) -> Result<(), String> {
        let mut names = BTreeSet::new();
        for stub in &self.suggested_decomposition {
            if !names.insert(stub.name.as_str()) {
                return Err(format!("duplicate stub name `{}`", stub.name));
            }
        }
        if !self.suggested_decomposition.iter().any(|s| s.entrypoint) {
            return Err("no stub is marked as entrypoint".into());
        }
        Ok(())
    }

    pub fn parse(response: &str) -> Result<Self, String> {
        let s: StructuredUnderstanding = serde_json::from_str(&extract_code(response)).map_err(|e| e.to_string())?;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftUnit {
    pub name: String,
    #[serde(default)]
    pub signature: Signature,
    pub source: String,
    #[serde(default)]
    pub doc: String,
}

/// The solution shape models are asked to reply with: units as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDraft {
    pub units: Vec<DraftUnit>,
    #[serde(default)]
    pub deps: Vec<Edge>,
    pub entrypoint: String,
}

impl SolutionDraft {
    pub fn into_solution(self) -> Result<CodeSolution, ModelError> {
        let units = self
            .units
            .into_iter()
            .map(|u| FunctionUnit::new(u.name, u.signature, u.source, u.doc))
            .collect::<Result<Vec<_>, _>>()?;
        CodeSolution::new(units, self.deps, self.entrypoint)
    }

    pub fn from_solution(solution: &CodeSolution) -> Self {
        SolutionDraft {
            units: solution
                .units
                .values()
                .map(|u| DraftUnit {
                    name: u.name.clone(),
                    signature: u.signature.clone(),
                    source: u.source.clone(),
                    doc: u.doc.clone(),
                })
                .collect(),
            deps: solution.deps.iter().cloned().collect(),
            entrypoint: solution.entrypoint.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DraftError {
    #[error("reply is not a solution object: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(#[from] ModelError),
}

pub fn parse_solution(response: &str) -> Result<CodeSolution, DraftError> {
    let draft: SolutionDraft =
        serde_json::from_str(&extract_code(response)).map_err(|e| DraftError::Parse(e.to_string()))?;
    Ok(draft.into_solution()?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub generation: u32,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageNode {
    pub id: String,
    pub generation: u32,
    pub origin: cae_core::model::Origin,
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor: Option<String>,
    #[serde(with = "floatfmt::scalar")]
    pub fitness: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub nodes: Vec<LineageNode>,
    pub events: Vec<Event>,
}

impl Lineage {
    pub fn add(&mut self, node: LineageNode) {
        if !self.nodes.iter().any(|n| n.id == node.id) {
            self.nodes.push(node);
        }
    }
}

/// Population at a generation boundary. Reports carry no wall times so that
/// replays reproduce snapshots byte for byte; timings are kept separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub generation: u32,
    #[serde(with = "floatfmt::scalar")]
    pub best_fitness: f64,
    pub population: Vec<Individual>,
    pub memory: ReflectionMemory,
}

impl Snapshot {
    pub fn new(generation: u32, population: &[Individual], memory: &ReflectionMemory) -> Self {
        let population: Vec<Individual> = population
            .iter()
            .cloned()
            .map(|mut ind| {
                if let Some(r) = ind.report.as_mut() {
                    r.wall_time = 0.0;
                }
                ind
            })
            .collect();
        Snapshot {
            generation,
            best_fitness: population.iter().map(Individual::fitness).fold(f64::INFINITY, f64::min),
            population,
            memory: memory.clone(),
        }
    }

    pub fn best(&self) -> Option<&Individual> {
        self.population
            .iter()
            .min_by(|a, b| a.fitness().total_cmp(&b.fitness()).then_with(|| a.id.cmp(&b.id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn understanding_contract() {
        let ok = r#"```json
{"restated_requirements": "r", "identified_objectives": [{"metric_id": "m", "direction": "minimize"}],
 "suggested_decomposition": [{"name": "a", "entrypoint": true}, {"name": "b"}]}
```"#;
        assert_eq!(StructuredUnderstanding::parse(ok).unwrap().suggested_decomposition.len(), 2);
        assert!(StructuredUnderstanding::parse("junk").is_err());
        let dup = r#"{"restated_requirements": "r", "identified_objectives": [],
 "suggested_decomposition": [{"name": "a", "entrypoint": true}, {"name": "a"}]}"#;
        assert!(StructuredUnderstanding::parse(dup).unwrap_err().contains("duplicate"));
        let none = r#"{"restated_requirements": "r", "identified_objectives": [], "suggested_decomposition": [{"name": "a"}]}"#;
        assert!(StructuredUnderstanding::parse(none).is_err());
    }

    #[test]
    fn draft_round_trip() {
        let text = r#"{"units": [{"name": "main", "source": "k = 1"}, {"name": "helper", "source": "note = x"}],
                       "deps": [{"from": "main", "to": "helper"}], "entrypoint": "main"}"#;
        let sol = parse_solution(text).unwrap();
        let again = SolutionDraft::from_solution(&sol).into_solution().unwrap();
        assert_eq!(sol.digest(), again.digest());
        let dangling = r#"{"units": [{"name": "main", "source": "k = 1"}], "deps": [{"from": "main", "to": "helper"}], "entrypoint": "main"}"#;
        assert!(matches!(parse_solution(dangling), Err(DraftError::Invalid(_))));
    }
}
