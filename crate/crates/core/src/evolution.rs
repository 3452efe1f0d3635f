//! Pure parts of the generational loop: configuration, survivor selection,
//! long-term reflection memory and per-slot random streams.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::floatfmt;
use crate::model::Individual;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("population_size must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("functional_offspring + structural_offspring must be at least 1")]
    NoOffspring,
    #[error("max_generations must be at least 1")]
    NoGenerations,
    #[error("operator weights must be nonnegative and not all zero")]
    BadOperatorWeights,
    #[error("memory capacity must be at least 1")]
    NoMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Reflect,
    Crossover,
    Mutate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorWeights {
    #[serde(default)]
    pub reflect: f64,
    #[serde(default)]
    pub crossover: f64,
    #[serde(default)]
    pub mutate: f64,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights {
            reflect: 1.0,
            crossover: 1.0,
            mutate: 1.0,
        }
    }
}

impl OperatorWeights {
    fn entries(&self) -> [(Operator, f64); 3] {
        [
            (Operator::Reflect, self.reflect),
            (Operator::Crossover, self.crossover),
            (Operator::Mutate, self.mutate),
        ]
    }

    pub fn is_valid(&self) -> bool {
        let entries = self.entries();
        entries.iter().all(|(_, w)| *w >= 0.0 && w.is_finite())
            && entries.iter().any(|(_, w)| *w > 0.0)
    }

    /// Roulette draw over the three operators.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Operator {
        let entries = self.entries();
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        let mut pick = rng.random::<f64>() * total;
        for (op, w) in entries {
            if w > 0.0 {
                if pick < w {
                    return op;
                }
                pick -= w;
            }
        }
        // rounding at the top end
        entries
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(op, _)| *op)
            .unwrap_or(Operator::Mutate)
    }
}

fn default_capacity() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    /// Defaults to `population_size / 2` when absent.
    #[serde(default)]
    pub functional_offspring: Option<usize>,
    #[serde(default)]
    pub structural_offspring: Option<usize>,
    pub max_generations: u32,
    #[serde(default)]
    pub repair_attempts: u32,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub operator_weights: OperatorWeights,
    #[serde(default = "default_capacity")]
    pub memory_capacity: usize,
    /// Stop after `patience` consecutive generations improving the best
    /// fitness by at most `epsilon`. Disabled when `patience` is absent.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub patience: Option<u32>,
}

impl EvolutionConfig {
    pub fn new(population_size: usize, max_generations: u32) -> Self {
        EvolutionConfig {
            population_size,
            functional_offspring: None,
            structural_offspring: None,
            max_generations,
            repair_attempts: 1,
            rng_seed: 0,
            operator_weights: OperatorWeights::default(),
            memory_capacity: default_capacity(),
            epsilon: 0.0,
            patience: None,
        }
    }

    pub fn lambda_functional(&self) -> usize {
        self.functional_offspring.unwrap_or(self.population_size / 2)
    }

    pub fn lambda_structural(&self) -> usize {
        self.structural_offspring.unwrap_or(self.population_size / 2)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size < 2 {
            return Err(ConfigError::PopulationTooSmall(self.population_size));
        }
        if self.lambda_functional() + self.lambda_structural() < 1 {
            return Err(ConfigError::NoOffspring);
        }
        if self.max_generations < 1 {
            return Err(ConfigError::NoGenerations);
        }
        if !self.operator_weights.is_valid() {
            return Err(ConfigError::BadOperatorWeights);
        }
        if self.memory_capacity < 1 {
            return Err(ConfigError::NoMemory);
        }
        Ok(())
    }
}

/// Which offspring pool a random stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Seed = 0,
    Functional = 1,
    Structural = 2,
}

/// Independent random stream for one offspring slot. Streams depend only on
/// `(seed, generation, pool, slot)`, so evaluation order never changes draws.
pub fn slot_rng(seed: u64, generation: u32, pool: Stream, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((generation as u64) << 32) | ((pool as u64) << 24) | (slot as u64 & 0xff_ffff);
    rng.set_stream(stream);
    rng
}

/// (μ+λ) truncation over the union of parents and both offspring pools.
///
/// Duplicated ids keep the copy with the earliest generation. Candidates are
/// ordered by fitness (invalid ones last) then id.
pub fn select_next_generation(
    population: &[Individual],
    functional: &[Individual],
    structural: &[Individual],
    mu: usize,
) -> Vec<Individual> {
    let mut by_id: BTreeMap<&str, &Individual> = BTreeMap::new();
    for ind in population.iter().chain(functional).chain(structural) {
        by_id
            .entry(ind.id.as_str())
            .and_modify(|kept| {
                if ind.generation < kept.generation {
                    *kept = ind;
                }
            })
            .or_insert(ind);
    }
    let mut pool: Vec<&Individual> = by_id.into_values().collect();
    pool.sort_by(|a, b| {
        a.fitness()
            .total_cmp(&b.fitness())
            .then_with(|| a.id.cmp(&b.id))
    });
    pool.into_iter().take(mu).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub generation: u32,
    pub summary_text: String,
    #[serde(with = "floatfmt::scalar")]
    pub best_fitness: f64,
}

/// Bounded, generation-ordered history of reflection summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionMemory {
    pub entries: VecDeque<MemoryEntry>,
    pub capacity: usize,
}

impl ReflectionMemory {
    pub fn new(capacity: usize) -> Self {
        ReflectionMemory {
            entries: VecDeque::new(),
            capacity: capacity.max(1),
        }
    }

    /// Appends and evicts the oldest entries beyond capacity.
    pub fn push(&mut self, entry: MemoryEntry) {
        let at = self
            .entries
            .iter()
            .position(|e| e.generation > entry.generation)
            .unwrap_or(self.entries.len());
        self.entries.insert(at, entry);
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    /// Text injected into operator prompts.
    pub fn render(&self) -> String {
        use core::fmt::Write;
        if self.entries.is_empty() {
            return String::from("(no history yet)");
        }
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "- generation {} (best fitness {}): {}",
                e.generation,
                e.best_fitness,
                e.summary_text.trim()
            );
        }
        out
    }
}
