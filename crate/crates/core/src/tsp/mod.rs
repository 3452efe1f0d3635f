//! TSPLIB ingestion, tour arithmetic, the optimality gap and three seeded
//! metaheuristics (GA, ACO, KGLS) whose guide function can be replaced.

mod aco;
mod ga;
mod instance;
mod kgls;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use instance::{
    check_permutation, gap_percent, parse_instance, random_uniform_instance, tour_length,
    DistanceMatrix, EdgeWeightType, Tour, TspInstance,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TspError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported EDGE_WEIGHT_TYPE `{0}`")]
    UnsupportedWeightType(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("order is not a permutation of the cities")]
    NotAPermutation,
    #[error("base objective {0} is not positive")]
    NonpositiveBase(f64),
    #[error("guide plugin failed: {message}")]
    PluginFailure { message: String, partial: RunStats },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "ACO")]
    Aco,
    #[serde(rename = "KGLS")]
    Kgls,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ga => "GA",
            Algorithm::Aco => "ACO",
            Algorithm::Kgls => "KGLS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GA" => Some(Algorithm::Ga),
            "ACO" => Some(Algorithm::Aco),
            "KGLS" => Some(Algorithm::Kgls),
            _ => None,
        }
    }
}

/// Per-edge scores that steer a metaheuristic.
///
/// GA reads them as shaped edge costs for selection fitness, ACO as the
/// desirability η(i, j), KGLS as the feature whose utility picks the edge to
/// penalise. Scores come in [`TspInstance::edges`] order.
pub trait EdgeGuide {
    fn scores(&mut self, algorithm: Algorithm, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>, String>;
}

/// The built-in guide: distance for GA and KGLS, inverse distance for ACO.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineGuide;

impl BaselineGuide {
    pub fn score(algorithm: Algorithm, dist: f64) -> f64 {
        match algorithm {
            Algorithm::Aco => 1.0 / dist.max(1e-10),
            Algorithm::Ga | Algorithm::Kgls => dist,
        }
    }
}

impl EdgeGuide for BaselineGuide {
    fn scores(&mut self, algorithm: Algorithm, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>, String> {
        Ok(edges.iter().map(|e| Self::score(algorithm, e.2)).collect())
    }
}

fn default_population() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaheuristicConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// GA population or ACO colony size; unused by KGLS.
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl MetaheuristicConfig {
    pub fn new(algorithm: Algorithm, iterations: usize, rng_seed: u64) -> Self {
        MetaheuristicConfig {
            algorithm,
            iterations,
            population_size: default_population(),
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub initial_length: f64,
    pub best_length: f64,
    pub iterations_run: usize,
    pub guide_calls: usize,
    /// Best-so-far length after each iteration.
    pub history: Vec<f64>,
}

impl RunStats {
    fn record(&mut self, best: f64) {
        self.iterations_run += 1;
        self.history.push(best);
    }
}

/// Runs the configured algorithm. The guide is consulted once for the whole
/// edge set before the search starts.
pub fn run_metaheuristic(
    inst: &TspInstance,
    cfg: &MetaheuristicConfig,
    guide: &mut dyn EdgeGuide,
) -> Result<(Tour, RunStats), TspError> {
    inst.validate()?;
    if cfg.iterations == 0 {
        return Err(TspError::InvalidConfig("iterations must be at least 1"));
    }
    let dist = inst.distance_matrix();
    let edges = inst.edges();
    let mut stats = RunStats::default();
    let scores = guide.scores(cfg.algorithm, &edges).map_err(|message| TspError::PluginFailure {
        message,
        partial: stats.clone(),
    })?;
    stats.guide_calls += 1;
    if scores.len() != edges.len() || scores.iter().any(|s| !s.is_finite()) {
        return Err(TspError::PluginFailure {
            message: alloc::format!("expected {} finite scores, got {}", edges.len(), scores.len()),
            partial: stats,
        });
    }
    let guide = DistanceMatrix::from_edge_values(inst.dimension, &scores);
    let order = match cfg.algorithm {
        Algorithm::Ga => ga::run(&dist, &guide, cfg, &mut stats),
        Algorithm::Aco => aco::run(&dist, &guide, cfg, &mut stats),
        Algorithm::Kgls => kgls::run(&dist, &guide, cfg, &mut stats),
    };
    let tour = Tour::new(inst, order)?;
    Ok((tour, stats))
}
