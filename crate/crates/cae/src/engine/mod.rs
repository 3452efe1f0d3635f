//! The generational loop: understanding, seeding with repair, functional and
//! structural offspring, (μ+λ) selection and long-term reflection.

mod persist;
mod types;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use cae_core::evolution::{
    select_next_generation, slot_rng, ConfigError, EvolutionConfig, MemoryEntry, Operator, ReflectionMemory, Stream,
};
use cae_core::model::{CodeSolution, Individual, ModelError, Origin, ProblemSpec, RuleSet, ValidationReport};
use rand::Rng;

pub use persist::{
    read_json, snapshot_file, write_json, RunDir, Timings, CONFIG_FILE, LINEAGE_FILE, TIMINGS_FILE, TRANSCRIPT_FILE,
    UNDERSTANDING_FILE,
};
pub use types::{
    parse_solution, DraftError, DraftUnit, Event, Lineage, LineageNode, MetricDescriptor, Snapshot, SolutionDraft,
    StructuredUnderstanding, UnitStub,
};

use crate::domains::Domain;
use crate::gateway::{
    extract_code, CompletionParams, Gateway, GatewayError, KnowledgeBase, PromptTemplate, TemplateId, TemplateSet,
};
use crate::sandbox::Sandbox;

pub const UNDERSTAND_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("understanding reply unusable after {attempts} attempts: {last}")]
    ParseError { attempts: usize, last: String },
    #[error("seed population exhausted: {produced} of {needed} valid candidates ({reason})")]
    SeedExhausted { produced: usize, needed: usize, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(String),
}

impl From<ConfigError> for EngineError {
    fn from(e: ConfigError) -> Self {
        EngineError::Config(e.to_string())
    }
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        EngineError::InvalidSpec(e.to_string())
    }
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub understanding: StructuredUnderstanding,
    pub snapshots: Vec<Snapshot>,
    pub lineage: Lineage,
    pub memory: ReflectionMemory,
    pub timings: Timings,
    pub stopped_early: bool,
}

impl RunResult {
    pub fn final_population(&self) -> &[Individual] {
        &self.snapshots.last().expect("a run has at least the seed snapshot").population
    }
}

/// What one generation produced, as seen by long-term reflection.
pub struct GenerationSummary<'a> {
    pub generation: u32,
    pub population: &'a [Individual],
    pub offspring: &'a [Individual],
}

struct Pending {
    solution: CodeSolution,
    parents: Vec<String>,
    operator: Option<String>,
    unit: Option<String>,
    donor: Option<String>,
}

pub struct Engine<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub sandbox: &'a Sandbox,
    pub domain: &'a dyn Domain,
    pub spec: &'a ProblemSpec,
    pub rules: &'a RuleSet,
    pub kb: &'a KnowledgeBase,
    pub kb_tags: Vec<String>,
    pub cfg: EvolutionConfig,
    pub params: CompletionParams,
    lineage: Mutex<Lineage>,
    timings: Mutex<Timings>,
}

fn fmt_fitness(f: f64) -> String {
    if f.is_finite() {
        format!("{f}")
    } else {
        "inf".into()
    }
}

pub fn describe_report(report: Option<&ValidationReport>) -> String {
    let Some(r) = report else {
        return "(not validated)".into();
    };
    let mut out = format!("fitness {}", fmt_fitness(r.fitness));
    for (k, v) in &r.metrics {
        let _ = write!(out, "\n  {k} = {v}");
    }
    for v in &r.per_rule {
        let _ = write!(out, "\n  [{}] {}: {}", if v.passed { "pass" } else { "FAIL" }, v.rule_id, v.detail);
    }
    out
}

fn overview(solution: &CodeSolution) -> String {
    let mut out = format!("entrypoint: {}\n", solution.entrypoint);
    for unit in solution.units.values() {
        let sig = serde_json::to_string(&unit.signature).expect("signature serializes");
        let _ = writeln!(out, "- {} {sig}", unit.name);
    }
    for edge in &solution.deps {
        let _ = writeln!(out, "  {} depends on {}", edge.from, edge.to);
    }
    out
}

fn inventory(parents: &[&Individual]) -> String {
    let mut out = String::new();
    for (k, p) in parents.iter().enumerate() {
        let _ = writeln!(out, "### Parent {} (id {}, fitness {})", k + 1, &p.id[..12], fmt_fitness(p.fitness()));
        out.push_str(&serde_json::to_string_pretty(&SolutionDraft::from_solution(&p.solution)).expect("draft serializes"));
        out.push_str("\n\n");
    }
    out
}

impl<'a> Engine<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gateway: &'a Gateway,
        templates: &'a TemplateSet,
        sandbox: &'a Sandbox,
        domain: &'a dyn Domain,
        spec: &'a ProblemSpec,
        rules: &'a RuleSet,
        kb: &'a KnowledgeBase,
        cfg: EvolutionConfig,
        params: CompletionParams,
    ) -> Self {
        Engine {
            gateway,
            templates,
            sandbox,
            domain,
            spec,
            rules,
            kb,
            kb_tags: Vec::new(),
            cfg,
            params,
            lineage: Mutex::new(Lineage::default()),
            timings: Mutex::new(Timings::default()),
        }
    }

    pub fn with_kb_tags(mut self, tags: Vec<String>) -> Self {
        self.kb_tags = tags;
        self
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage.lock().expect("lineage lock").clone()
    }

    fn event(&self, generation: u32, kind: &str, detail: impl Into<String>) {
        let detail = detail.into();
        log::info!("g{generation} {kind}: {detail}");
        self.lineage.lock().expect("lineage lock").events.push(Event {
            generation,
            kind: kind.into(),
            detail,
        });
    }

    fn render(&self, id: TemplateId, bindings: &[(&str, String)]) -> Result<String, GatewayError> {
        let map: BTreeMap<&str, &str> = bindings.iter().map(|(k, v)| (*k, v.as_str())).collect();
        self.templates.render(id, &map)
    }

    fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.gateway.complete(prompt, &self.params)
    }

    fn validate(&self, solution: &CodeSolution) -> ValidationReport {
        self.sandbox.validate(solution, self.rules, self.spec, self.domain)
    }

    /// Validates concurrently; results keep input order.
    fn validate_all(&self, solutions: &[&CodeSolution]) -> Vec<ValidationReport> {
        std::thread::scope(|s| {
            let handles: Vec<_> = solutions.iter().map(|sol| s.spawn(move || self.validate(sol))).collect();
            handles.into_iter().map(|h| h.join().expect("validation worker panicked")).collect()
        })
    }

    fn record_timing(&self, generation: u32, ind: &Individual) {
        if let Some(r) = &ind.report {
            self.timings
                .lock()
                .expect("timings lock")
                .generations
                .entry(generation)
                .or_default()
                .insert(ind.id.clone(), r.wall_time);
        }
    }

    fn record_node(&self, ind: &Individual, pending: Option<&Pending>) {
        self.lineage.lock().expect("lineage lock").add(LineageNode {
            id: ind.id.clone(),
            generation: ind.generation,
            origin: ind.origin,
            parents: ind.parents.clone(),
            operator: pending.and_then(|p| p.operator.clone()),
            unit: pending.and_then(|p| p.unit.clone()),
            donor: pending.and_then(|p| p.donor.clone()),
            fitness: ind.fitness(),
        });
    }

    pub fn understand(&self) -> Result<StructuredUnderstanding, EngineError> {
        if self.spec.requirements.trim().is_empty() {
            return Err(EngineError::InvalidSpec("requirements text is empty".into()));
        }
        let objectives = serde_json::to_string_pretty(&self.spec.objectives).expect("objectives serialize");
        let constraints = serde_json::to_string_pretty(&self.spec.constraints).expect("constraints serialize");
        let mut last = String::new();
        for attempt in 1..=UNDERSTAND_ATTEMPTS {
            let note = if attempt == 1 {
                format!("Attempt {attempt} of {UNDERSTAND_ATTEMPTS}.")
            } else {
                format!("Attempt {attempt} of {UNDERSTAND_ATTEMPTS}. The previous reply was rejected: {last}")
            };
            let prompt = self.render(
                TemplateId::Ps,
                &[
                    ("requirements", self.spec.requirements.clone()),
                    ("objectives", objectives.clone()),
                    ("constraints", constraints.clone()),
                    ("attempt", note),
                ],
            )?;
            match self.complete(&prompt) {
                Ok(reply) => match StructuredUnderstanding::parse(&reply) {
                    Ok(s) => return Ok(s),
                    Err(e) => last = e,
                },
                Err(e @ GatewayError::BudgetExceeded(_)) => return Err(e.into()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(EngineError::ParseError {
            attempts: UNDERSTAND_ATTEMPTS,
            last,
        })
    }

    /// P_w produces the generation prompt P_f; each candidate slot follows P_f
    /// and gets up to `repair_attempts` repair rounds.
    pub fn seed_population(&self, s: &StructuredUnderstanding, mu: usize) -> Result<Vec<Individual>, EngineError> {
        let exhausted = |produced: usize, reason: String| EngineError::SeedExhausted {
            produced,
            needed: mu,
            reason,
        };
        let meta = self.render(
            TemplateId::Pw,
            &[
                ("understanding", serde_json::to_string_pretty(s).expect("understanding serializes")),
                ("knowledge", self.kb.render(&self.kb_tags)),
                ("domain_contract", self.domain.contract()),
            ],
        )?;
        let pf_text = self.complete(&meta).map_err(|e| exhausted(0, e.to_string()))?;
        let pf = PromptTemplate::new(TemplateId::Pf, pf_text);
        let max_slots = 4 * mu.max(1);
        let mut population: Vec<Individual> = Vec::new();
        for slot in 0..max_slots {
            if population.len() == mu {
                break;
            }
            let bindings: BTreeMap<&str, String> = pf
                .required_placeholders
                .iter()
                .map(|name| {
                    let value = match name.as_str() {
                        "candidate_index" => (slot + 1).to_string(),
                        "population_size" => mu.to_string(),
                        other => format!("{{{other}}}"),
                    };
                    (name.as_str(), value)
                })
                .collect();
            let prompt = format!(
                "{}\n\nCandidate {} of {mu}; make it differ from the other candidates.",
                pf.render(&bindings)?,
                slot + 1
            );
            let mut reply = match self.complete(&prompt) {
                Ok(r) => r,
                Err(e @ GatewayError::BudgetExceeded(_)) => return Err(exhausted(population.len(), e.to_string())),
                Err(e) => {
                    self.event(0, "seed_candidate_failed", format!("slot {slot}: {e}"));
                    continue;
                }
            };
            for round in 0..=self.cfg.repair_attempts {
                let (detail, text) = match parse_solution(&reply) {
                    Ok(solution) => {
                        let report = self.validate(&solution);
                        if report.is_valid() {
                            let ind = Individual::new(solution, 0, vec![], Origin::Seed)?.with_report(report);
                            if population.iter().any(|p| p.id == ind.id) {
                                self.event(0, "seed_duplicate", format!("slot {slot}: {}", &ind.id[..12]));
                            } else {
                                self.record_node(&ind, None);
                                self.record_timing(0, &ind);
                                population.push(ind);
                            }
                            break;
                        }
                        let text = serde_json::to_string_pretty(&SolutionDraft::from_solution(&solution))
                            .expect("draft serializes");
                        (describe_report(Some(&report)), text)
                    }
                    Err(e) => (e.to_string(), reply.clone()),
                };
                if round == self.cfg.repair_attempts {
                    self.event(0, "seed_candidate_dropped", format!("slot {slot}: {}", first_line(&detail)));
                    break;
                }
                self.event(0, "seed_repair", format!("slot {slot} round {}", round + 1));
                let prompt = self.render(
                    TemplateId::Repair,
                    &[
                        ("requirements", self.spec.requirements.clone()),
                        ("solution", text),
                        ("report", detail),
                    ],
                )?;
                reply = match self.complete(&prompt) {
                    Ok(r) => r,
                    Err(e @ GatewayError::BudgetExceeded(_)) => return Err(exhausted(population.len(), e.to_string())),
                    Err(e) => {
                        self.event(0, "seed_candidate_failed", format!("slot {slot}: {e}"));
                        break;
                    }
                };
            }
        }
        if population.len() < mu {
            return Err(exhausted(population.len(), format!("{max_slots} candidate slots used")));
        }
        Ok(population)
    }

    fn functional_prompt(
        &self,
        op: Operator,
        parent: &Individual,
        donor: Option<&Individual>,
        unit: &str,
        memory: &ReflectionMemory,
    ) -> Result<String, GatewayError> {
        let u = &parent.solution.units[unit];
        let signature = serde_json::to_string(&u.signature).expect("signature serializes");
        let common = [
            ("requirements", self.spec.requirements.clone()),
            ("memory", memory.render()),
            ("unit_name", unit.to_string()),
            ("unit_signature", signature),
        ];
        let mut b: Vec<(&str, String)> = common.to_vec();
        let id = match op {
            Operator::Mutate | Operator::Reflect => {
                b.push(("unit_source", u.source.clone()));
                b.push(("solution_overview", overview(&parent.solution)));
                b.push(("parent_fitness", fmt_fitness(parent.fitness())));
                if op == Operator::Reflect {
                    b.push(("report", describe_report(parent.report.as_ref())));
                    TemplateId::ReflectShort
                } else {
                    TemplateId::Mutate
                }
            }
            Operator::Crossover => {
                let donor = donor.expect("crossover has a donor");
                b.push(("recipient_source", u.source.clone()));
                b.push(("donor_source", donor.solution.units[unit].source.clone()));
                b.push(("recipient_fitness", fmt_fitness(parent.fitness())));
                b.push(("donor_fitness", fmt_fitness(donor.fitness())));
                TemplateId::Crossover
            }
        };
        self.render(id, &b)
    }

    /// λ_F single-unit rewrites. Offspring that cannot be built or fail a
    /// blocking rule are dropped with an event.
    pub fn evolve_functional(&self, pop: &[Individual], memory: &ReflectionMemory, generation: u32) -> Vec<Individual> {
        let mut pending = Vec::new();
        for slot in 0..self.cfg.lambda_functional() {
            if pop.is_empty() {
                break;
            }
            let mut rng = slot_rng(self.cfg.rng_seed, generation, Stream::Functional, slot);
            let op = self.cfg.operator_weights.draw(&mut rng);
            let pi = rng.random_range(0..pop.len());
            let parent = &pop[pi];
            let (unit, donor) = match op {
                Operator::Crossover => {
                    if pop.len() < 2 {
                        self.event(generation, "offspring_dropped", format!("functional slot {slot}: no donor"));
                        continue;
                    }
                    let mut di = rng.random_range(0..pop.len() - 1);
                    if di >= pi {
                        di += 1;
                    }
                    let donor = &pop[di];
                    let shared: Vec<&String> = parent
                        .solution
                        .units
                        .keys()
                        .filter(|n| donor.solution.units.contains_key(*n))
                        .collect();
                    let differing: Vec<&String> = shared
                        .iter()
                        .copied()
                        .filter(|n| parent.solution.units[*n].source != donor.solution.units[*n].source)
                        .collect();
                    let choices = if differing.is_empty() { shared } else { differing };
                    if choices.is_empty() {
                        self.event(generation, "offspring_dropped", format!("functional slot {slot}: parents share no unit"));
                        continue;
                    }
                    (choices[rng.random_range(0..choices.len())].clone(), Some(donor))
                }
                Operator::Mutate | Operator::Reflect => {
                    let names: Vec<&String> = parent.solution.units.keys().collect();
                    (names[rng.random_range(0..names.len())].clone(), None)
                }
            };
            let op_name = format!("{op:?}").to_lowercase();
            let built = self
                .functional_prompt(op, parent, donor, &unit, memory)
                .and_then(|prompt| self.complete(&prompt))
                .map_err(|e| e.to_string())
                .and_then(|reply| {
                    let source = extract_code(&reply);
                    parent.solution.with_unit_source(&unit, &source).map_err(|e| e.to_string())
                });
            match built {
                Ok(solution) => pending.push(Pending {
                    solution,
                    parents: vec![parent.id.clone()],
                    operator: Some(op_name),
                    unit: Some(unit),
                    donor: donor.map(|d| d.id.clone()),
                }),
                Err(e) => self.event(generation, "offspring_dropped", format!("functional slot {slot} ({op_name}): {e}")),
            }
        }
        self.finish_offspring(pending, generation, Origin::Functional)
    }

    /// λ_S recombinations of two distinct parents, with one repair round for
    /// structurally invalid replies.
    pub fn evolve_structural(
        &self,
        pop: &[Individual],
        memory: &ReflectionMemory,
        generation: u32,
    ) -> Result<Vec<Individual>, EngineError> {
        if pop.len() < 2 {
            return Err(EngineError::Precondition(format!(
                "structural evolution needs at least 2 parents, population has {}",
                pop.len()
            )));
        }
        let mut pending = Vec::new();
        for slot in 0..self.cfg.lambda_structural() {
            let mut rng = slot_rng(self.cfg.rng_seed, generation, Stream::Structural, slot);
            let i = rng.random_range(0..pop.len());
            let mut j = rng.random_range(0..pop.len() - 1);
            if j >= i {
                j += 1;
            }
            let parents = [&pop[i], &pop[j]];
            match self.recombine(&parents, memory) {
                Ok(solution) => pending.push(Pending {
                    solution,
                    parents: parents.iter().map(|p| p.id.clone()).collect(),
                    operator: Some("recombine".into()),
                    unit: None,
                    donor: None,
                }),
                Err(e) => {
                    let kind = if matches!(e, RecombineError::Invalid(_)) {
                        "recombination_invalid"
                    } else {
                        "offspring_dropped"
                    };
                    self.event(generation, kind, format!("structural slot {slot}: {e}"));
                }
            }
        }
        Ok(self.finish_offspring(pending, generation, Origin::Structural))
    }

    fn recombine(&self, parents: &[&Individual], memory: &ReflectionMemory) -> Result<CodeSolution, RecombineError> {
        let prompt = self.render(
            TemplateId::Recombine,
            &[
                ("requirements", self.spec.requirements.clone()),
                ("memory", memory.render()),
                ("parents", inventory(parents)),
            ],
        )?;
        let reply = self.complete(&prompt)?;
        let err = match parse_solution(&reply) {
            Ok(solution) => return Ok(solution),
            Err(e) => e,
        };
        let prompt = self.render(
            TemplateId::Repair,
            &[
                ("requirements", self.spec.requirements.clone()),
                ("solution", extract_code(&reply)),
                ("report", err.to_string()),
            ],
        )?;
        let reply = self.complete(&prompt)?;
        parse_solution(&reply).map_err(|e| RecombineError::Invalid(e.to_string()))
    }

    fn finish_offspring(&self, pending: Vec<Pending>, generation: u32, origin: Origin) -> Vec<Individual> {
        let solutions: Vec<&CodeSolution> = pending.iter().map(|p| &p.solution).collect();
        let reports = self.validate_all(&solutions);
        let mut out = Vec::new();
        for (p, report) in pending.iter().zip(reports) {
            let ind = match Individual::new(p.solution.clone(), generation, p.parents.clone(), origin) {
                Ok(ind) => ind.with_report(report),
                Err(e) => {
                    self.event(generation, "offspring_dropped", e.to_string());
                    continue;
                }
            };
            self.record_timing(generation, &ind);
            if !ind.fitness().is_finite() {
                let failed: Vec<String> = ind
                    .report
                    .iter()
                    .flat_map(|r| r.failed_rules())
                    .map(|v| format!("{}: {}", v.rule_id, first_line(&v.detail)))
                    .collect();
                self.event(
                    generation,
                    "offspring_dropped",
                    format!("{origin} {}: {}", &ind.id[..12], failed.join("; ")),
                );
                continue;
            }
            self.record_node(&ind, Some(p));
            out.push(ind);
        }
        out
    }

    pub fn reflect_long_term(&self, memory: &ReflectionMemory, summary: &GenerationSummary<'_>) -> ReflectionMemory {
        let mut all: Vec<&Individual> = summary.population.iter().chain(summary.offspring).collect();
        all.sort_by(|a, b| a.fitness().total_cmp(&b.fitness()).then_with(|| a.id.cmp(&b.id)));
        let best = all.first().copied();
        let worst = all.last().copied();
        let best_fitness = best.map_or(f64::INFINITY, |b| b.fitness());
        let prompt = self.render(
            TemplateId::ReflectLong,
            &[
                ("history", memory.render()),
                ("generation", summary.generation.to_string()),
                ("best", describe_report(best.and_then(|b| b.report.as_ref()))),
                ("worst", describe_report(worst.and_then(|w| w.report.as_ref()))),
            ],
        );
        let text = match prompt.and_then(|p| self.complete(&p)) {
            Ok(reply) if !reply.trim().is_empty() => reply.trim().to_string(),
            outcome => {
                let why = match outcome {
                    Err(e) => e.to_string(),
                    Ok(_) => "empty reply".into(),
                };
                self.event(summary.generation, "reflection_fallback", why);
                fallback_summary(best_fitness, &all)
            }
        };
        let mut next = memory.clone();
        next.push(MemoryEntry {
            generation: summary.generation,
            summary_text: text,
            best_fitness,
        });
        next
    }

    /// Runs the whole pipeline, persisting artifacts to `dir` after every
    /// generation. `progress` sees each snapshot as it is taken.
    pub fn run(&self, dir: Option<&RunDir>, progress: &mut dyn FnMut(&Snapshot)) -> Result<RunResult, EngineError> {
        self.cfg.validate()?;
        self.spec.validate(self.rules)?;
        if self.rules.is_empty() {
            return Err(EngineError::Config("rule set is empty".into()));
        }
        let persist_partial = |e: EngineError| {
            if let Some(d) = dir {
                let _ = d.write_lineage(&self.lineage());
                let _ = d.write_timings(&self.timings.lock().expect("timings lock"));
            }
            e
        };
        let understanding = self.understand().map_err(persist_partial)?;
        if let Some(d) = dir {
            d.write_understanding(&understanding)?;
        }
        let mu = self.cfg.population_size;
        let mut pop = self.seed_population(&understanding, mu).map_err(persist_partial)?;
        let mut memory = ReflectionMemory::new(self.cfg.memory_capacity);
        let mut snapshots = vec![Snapshot::new(0, &pop, &memory)];
        self.persist(dir, &snapshots[0])?;
        progress(&snapshots[0]);
        let mut stale = 0;
        let mut stopped_early = false;
        for generation in 1..=self.cfg.max_generations {
            let functional = self.evolve_functional(&pop, &memory, generation);
            let structural = if self.cfg.lambda_structural() > 0 {
                self.evolve_structural(&pop, &memory, generation)?
            } else {
                Vec::new()
            };
            let next = select_next_generation(&pop, &functional, &structural, mu);
            let offspring: Vec<Individual> = functional.into_iter().chain(structural).collect();
            memory = self.reflect_long_term(
                &memory,
                &GenerationSummary {
                    generation,
                    population: &next,
                    offspring: &offspring,
                },
            );
            let previous_best = snapshots.last().expect("seed snapshot").best_fitness;
            pop = next;
            let snapshot = Snapshot::new(generation, &pop, &memory);
            self.persist(dir, &snapshot)?;
            progress(&snapshot);
            let improvement = previous_best - snapshot.best_fitness;
            snapshots.push(snapshot);
            if let Some(patience) = self.cfg.patience {
                stale = if improvement <= self.cfg.epsilon { stale + 1 } else { 0 };
                if stale >= patience {
                    self.event(generation, "early_stop", format!("improvement {improvement} for {stale} generation(s)"));
                    stopped_early = true;
                    if let Some(d) = dir {
                        d.write_lineage(&self.lineage())?;
                    }
                    break;
                }
            }
        }
        Ok(RunResult {
            understanding,
            snapshots,
            lineage: self.lineage(),
            memory,
            timings: self.timings.lock().expect("timings lock").clone(),
            stopped_early,
        })
    }

    fn persist(&self, dir: Option<&RunDir>, snapshot: &Snapshot) -> Result<(), EngineError> {
        if let Some(d) = dir {
            d.write_snapshot(snapshot)?;
            d.write_lineage(&self.lineage())?;
            d.write_timings(&self.timings.lock().expect("timings lock"))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
enum RecombineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("RecombinationInvalid: {0}")]
    Invalid(String),
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

/// Best fitness plus a tally of failed rules, for when the model is
/// unreachable.
pub fn fallback_summary(best_fitness: f64, individuals: &[&Individual]) -> String {
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for ind in individuals {
        for v in ind.report.iter().flat_map(|r| r.failed_rules()) {
            *tally.entry(v.rule_id.as_str()).or_default() += 1;
        }
    }
    let failed = if tally.is_empty() {
        "none".to_string()
    } else {
        tally
            .iter()
            .map(|(k, n)| format!("{k} x{n}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!("best fitness {}; failed rules: {failed}", fmt_fitness(best_fitness))
}
