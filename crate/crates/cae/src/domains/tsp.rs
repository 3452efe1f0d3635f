use std::path::{Path, PathBuf};

use cae_core::floatfmt::Float;
use cae_core::model::ValidationRule;
use cae_core::tsp::{
    gap_percent, parse_instance, random_uniform_instance, run_metaheuristic, tour_length, Algorithm, BaselineGuide,
    EdgeGuide, MetaheuristicConfig, TspError, TspInstance,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Domain, Invoke, Metrics, Probe, ProbeSet, Shape};
use crate::sandbox::ExecError;

pub const DOMAIN_ID: &str = "tsp";

/// Gap recorded for an instance whose plugin run failed.
pub const GAP_SENTINEL: f64 = -100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceRef {
    File { name: String, path: PathBuf },
    Random { name: String, random: RandomSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub seed: u64,
}

impl InstanceRef {
    pub fn load(&self, base_dir: &Path) -> Result<TspInstance, String> {
        match self {
            InstanceRef::File { name, path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| format!("{}: {e}", full.display()))?;
                let mut inst = parse_instance(&text).map_err(|e| format!("{}: {e}", full.display()))?;
                inst.name.clone_from(name);
                Ok(inst)
            }
            InstanceRef::Random { name, random } => {
                random_uniform_instance(name.clone(), random.n, random.seed).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginTask {
    #[default]
    GuideTsp,
    SolveTsp,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_population() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceParams {
    pub algorithm: Algorithm,
    pub iterations: usize,
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub instances: Vec<InstanceRef>,
    #[serde(default)]
    pub task: PluginTask,
}

impl PerformanceParams {
    pub fn from_rule(rule: &ValidationRule) -> Result<Self, String> {
        let value = Value::Object(rule.params.clone().into_iter().collect());
        serde_json::from_value(value).map_err(|e| format!("rule `{}`: {e}", rule.rule_id))
    }

    pub fn config(&self, seed: u64) -> MetaheuristicConfig {
        MetaheuristicConfig {
            population_size: self.population_size,
            ..MetaheuristicConfig::new(self.algorithm, self.iterations, seed)
        }
    }
}

pub fn guide_request(algorithm: Algorithm, edges: &[(usize, usize, f64)]) -> Value {
    let edges: Vec<Value> = edges.iter().map(|&(i, j, d)| json!([i, j, d])).collect();
    json!({"task": "guide_tsp", "algorithm": algorithm.as_str(), "edges": edges})
}

pub fn solve_request(inst: &TspInstance, seed: u64) -> Value {
    let coords: Vec<Value> = inst.coords.iter().map(|&(x, y)| json!([x, y])).collect();
    json!({"task": "solve_tsp", "coords": coords, "seed": seed})
}

/// Edge guide served by a candidate through the shim.
pub struct ShimGuide<'a> {
    invoke: &'a Invoke<'a>,
}

impl<'a> ShimGuide<'a> {
    pub fn new(invoke: &'a Invoke<'a>) -> Self {
        ShimGuide { invoke }
    }
}

impl EdgeGuide for ShimGuide<'_> {
    fn scores(&mut self, algorithm: Algorithm, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>, String> {
        #[derive(Deserialize)]
        struct Reply {
            scores: Vec<Float>,
        }
        let response = (self.invoke)(&guide_request(algorithm, edges)).map_err(|e| e.to_string())?;
        let reply: Reply = serde_json::from_value(response).map_err(|e| format!("bad guide_tsp reply: {e}"))?;
        Ok(reply.scores.into_iter().map(|f| f.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub instance: String,
    pub base_obj: f64,
    /// Absent when the plugin run failed.
    pub cae_obj: Option<f64>,
    pub gap_percent: f64,
    pub runs_averaged: usize,
    pub seeds: Vec<u64>,
    pub failure: Option<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Average tour length of the baseline guide over `seeds`.
pub fn baseline_objective(inst: &TspInstance, params: &PerformanceParams) -> Result<f64, TspError> {
    let mut lengths = Vec::with_capacity(params.seeds.len());
    for &seed in &params.seeds {
        let (tour, _) = run_metaheuristic(inst, &params.config(seed), &mut BaselineGuide)?;
        lengths.push(tour.length);
    }
    Ok(mean(&lengths))
}

fn candidate_objective(inst: &TspInstance, params: &PerformanceParams, invoke: &Invoke<'_>) -> Result<f64, String> {
    let mut lengths = Vec::with_capacity(params.seeds.len());
    for &seed in &params.seeds {
        let length = match params.task {
            PluginTask::GuideTsp => {
                let mut guide = ShimGuide::new(invoke);
                run_metaheuristic(inst, &params.config(seed), &mut guide)
                    .map_err(|e| e.to_string())?
                    .0
                    .length
            }
            PluginTask::SolveTsp => {
                let response = invoke(&solve_request(inst, seed)).map_err(|e| e.to_string())?;
                let order: Vec<usize> = serde_json::from_value(response["tour"].clone())
                    .map_err(|e| format!("bad solve_tsp reply: {e}"))?;
                tour_length(inst, &order).map_err(|e| e.to_string())?
            }
        };
        lengths.push(length);
    }
    Ok(mean(&lengths))
}

/// Baseline and candidate runs per instance, concurrently across instances.
/// A failed candidate run scores [`GAP_SENTINEL`] for its instance; baseline
/// failures are errors.
pub fn evaluate_candidate_gap(
    instances: &[TspInstance],
    params: &PerformanceParams,
    invoke: &Invoke<'_>,
) -> Result<(Vec<GapRow>, f64), TspError> {
    if params.seeds.is_empty() || instances.is_empty() {
        return Err(TspError::InvalidConfig("need at least one instance and one seed"));
    }
    let rows: Vec<Result<GapRow, TspError>> = std::thread::scope(|s| {
        let handles: Vec<_> = instances
            .iter()
            .map(|inst| {
                s.spawn(move || {
                    let base = baseline_objective(inst, params)?;
                    let (cae, gap, failure) = match candidate_objective(inst, params, invoke) {
                        Ok(cae) => (Some(cae), gap_percent(base, cae)?, None),
                        Err(e) => (None, GAP_SENTINEL, Some(e)),
                    };
                    Ok(GapRow {
                        instance: inst.name.clone(),
                        base_obj: base,
                        cae_obj: cae,
                        gap_percent: gap,
                        runs_averaged: params.seeds.len(),
                        seeds: params.seeds.clone(),
                        failure,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("instance worker panicked")).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean_gap = mean(&rows.iter().map(|r| r.gap_percent).collect::<Vec<_>>());
    Ok((rows, mean_gap))
}

#[derive(Debug, Clone)]
pub struct TspDomain {
    base_dir: PathBuf,
}

impl TspDomain {
    pub fn new(base_dir: &Path) -> Self {
        TspDomain {
            base_dir: base_dir.to_path_buf(),
        }
    }

    fn probe_instance() -> TspInstance {
        TspInstance::new(
            "probe5",
            vec![(0.0, 0.0), (0.0, 3.0), (4.0, 3.0), (4.0, 0.0), (2.0, 1.0)],
            cae_core::tsp::EdgeWeightType::Euc2d,
        )
        .expect("valid probe instance")
    }
}

impl Domain for TspDomain {
    fn id(&self) -> &str {
        DOMAIN_ID
    }

    fn contract(&self) -> String {
        "The entrypoint has signature guide(algorithm, edges) and returns one finite score per edge. \
         It is called with {\"task\": \"guide_tsp\", \"algorithm\": \"GA\"|\"ACO\"|\"KGLS\", \
         \"edges\": [[i, j, distance], ...]} and must return {\"scores\": [...]}. GA reads scores as edge \
         costs, ACO as desirability, KGLS as the feature that selects edges to penalise. Whole-tour \
         candidates may instead answer {\"task\": \"solve_tsp\", \"coords\": [[x, y], ...], \"seed\": s} \
         with {\"tour\": [...]}."
            .to_string()
    }

    fn entry_params(&self) -> &[&'static str] {
        &["algorithm", "edges"]
    }

    fn probes(&self) -> ProbeSet {
        let inst = Self::probe_instance();
        let edges = inst.edges();
        let shape = |n| Shape::Object {
            fields: [("scores".to_string(), Shape::Vector { len: n })].into_iter().collect(),
        };
        ProbeSet {
            probes: [Algorithm::Ga, Algorithm::Aco, Algorithm::Kgls]
                .into_iter()
                .map(|a| Probe {
                    probe_id: format!("guide_{}", a.as_str().to_ascii_lowercase()),
                    request: guide_request(a, &edges),
                    expected: shape(edges.len()),
                })
                .collect(),
        }
    }

    fn check_probe(&self, _probe: &Probe, response: &Value) -> Result<(), String> {
        let scores: Vec<Float> = serde_json::from_value(response["scores"].clone()).map_err(|e| e.to_string())?;
        if scores.iter().any(|s| !s.0.is_finite()) {
            return Err("non-finite score".into());
        }
        Ok(())
    }

    fn evaluate(&self, rule: &ValidationRule, invoke: &Invoke<'_>) -> Result<Metrics, ExecError> {
        let params = PerformanceParams::from_rule(rule).map_err(ExecError::ProtocolError)?;
        let instances = params
            .instances
            .iter()
            .map(|r| r.load(&self.base_dir))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ExecError::ProtocolError)?;
        let (rows, mean_gap) =
            evaluate_candidate_gap(&instances, &params, invoke).map_err(|e| ExecError::ProtocolError(e.to_string()))?;
        let mut metrics = Metrics::new();
        for row in rows {
            metrics.insert(format!("base:{}", row.instance), row.base_obj);
            if let Some(cae) = row.cae_obj {
                metrics.insert(format!("obj:{}", row.instance), cae);
            }
        }
        metrics.insert("gap_percent".into(), mean_gap);
        Ok(metrics)
    }

    fn worst_case(&self, _rule: &ValidationRule) -> Metrics {
        [("gap_percent".to_string(), GAP_SENTINEL)].into_iter().collect()
    }
}
