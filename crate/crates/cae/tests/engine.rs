mod common;

use std::path::Path;
use std::sync::Arc;

use cae::domains::{domain_for, Domain};
use cae::engine::{Engine, EngineError, GenerationSummary, RunDir, Snapshot, StructuredUnderstanding, LINEAGE_FILE};
use cae::gateway::{Budget, CompletionParams, Gateway, KnowledgeBase, MockProvider, MockRule, MockScript, TemplateSet};
use cae::sandbox::{ExecutionLimits, Sandbox};
use cae_core::evolution::{EvolutionConfig, MemoryEntry, OperatorWeights, ReflectionMemory};
use cae_core::model::{
    CodeSolution, Direction, Edge, FunctionUnit, Individual, Objective, Origin, ProblemSpec, RuleKind, RuleSet, Severity,
    Signature, ValidationRule,
};
use common::{quad_signature, shim};
use serde_json::json;

const UNDERSTANDING: &str = r#"{"restated_requirements": "solve quadratics",
 "identified_objectives": [{"metric_id": "iterations_to_tol", "direction": "minimize"}],
 "identified_constraints": ["loads"],
 "suggested_decomposition": [{"name": "lisr_k", "entrypoint": true}, {"name": "greedy_matrix"}]}"#;

fn rule(contains: &[&str], responses: &[&str]) -> MockRule {
    MockRule {
        prompt_digest: None,
        contains: contains.iter().map(|s| s.to_string()).collect(),
        responses: responses.iter().map(|s| s.to_string()).collect(),
    }
}

fn unit(name: &str, source: &str) -> FunctionUnit {
    let sig = if name == "lisr_k" { quad_signature() } else { Signature::default() };
    FunctionUnit::new(name, sig, source, "").unwrap()
}

fn solution(units: &[(&str, &str)], deps: &[(&str, &str)]) -> CodeSolution {
    CodeSolution::new(
        units.iter().map(|(n, s)| unit(n, s)),
        deps.iter().map(|(a, b)| Edge::new(*a, *b)),
        "lisr_k",
    )
    .unwrap()
}

fn draft(units: &[(&str, &str)], deps: &[(&str, &str)]) -> String {
    let units: Vec<_> = units
        .iter()
        .map(|(n, s)| {
            let sig = if *n == "lisr_k" { quad_signature() } else { Signature::default() };
            json!({"name": n, "signature": sig, "source": s})
        })
        .collect();
    let deps: Vec<_> = deps.iter().map(|(a, b)| json!({"from": a, "to": b})).collect();
    format!("```json\n{}\n```", json!({"units": units, "deps": deps, "entrypoint": "lisr_k"}))
}

struct Kit {
    gateway: Gateway,
    templates: TemplateSet,
    sandbox: Sandbox,
    domain: Box<dyn Domain>,
    spec: ProblemSpec,
    rules: RuleSet,
    kb: KnowledgeBase,
}

impl Kit {
    fn new(rules: Vec<MockRule>, budget: Budget) -> Self {
        Self::with_limits(rules, budget, ExecutionLimits::default())
    }

    fn with_limits(rules: Vec<MockRule>, budget: Budget, limits: ExecutionLimits) -> Self {
        let r = |id: &str, kind, params: serde_json::Value, severity| ValidationRule {
            rule_id: id.into(),
            kind,
            params: serde_json::from_value(params).unwrap(),
            severity,
        };
        Kit {
            gateway: Gateway::new(budget).register("mock", Arc::new(MockProvider::new(MockScript { rules }))),
            templates: TemplateSet::default(),
            sandbox: Sandbox::new(shim(), limits, 4).unwrap(),
            domain: domain_for("quadratic", Path::new(".")).unwrap(),
            spec: ProblemSpec {
                requirements: "Minimise the finite-sum quadratic.".into(),
                objectives: vec![Objective {
                    metric_id: "iterations_to_tol".into(),
                    direction: Direction::Minimize,
                    weight: 1.0,
                }],
                constraints: vec![],
                domain_id: "quadratic".into(),
            },
            rules: RuleSet::new(vec![
                r("load", RuleKind::Static, json!({"check": "dry_load"}), Severity::Blocking),
                r("dag", RuleKind::Static, json!({"check": "dag"}), Severity::Blocking),
                r("probes", RuleKind::Functional, json!({"probes": ["identity"]}), Severity::Blocking),
                r(
                    "speed",
                    RuleKind::Performance,
                    json!({"scenarios": [{"id": "s", "n": 4, "d": 4, "xi": 3.0, "seed": 5}], "max_iter": 200}),
                    Severity::Scoring,
                ),
            ])
            .unwrap(),
            kb: KnowledgeBase::default(),
        }
    }

    fn engine(&self, cfg: EvolutionConfig) -> Engine<'_> {
        Engine::new(
            &self.gateway,
            &self.templates,
            &self.sandbox,
            self.domain.as_ref(),
            &self.spec,
            &self.rules,
            &self.kb,
            cfg,
            CompletionParams::new("mock", 3),
        )
    }

    fn individual(&self, s: CodeSolution) -> Individual {
        let report = self.sandbox.validate(&s, &self.rules, &self.spec, self.domain.as_ref());
        Individual::new(s, 0, vec![], Origin::Seed).unwrap().with_report(report)
    }

    fn prompts(&self) -> Vec<String> {
        self.gateway.transcript().entries().iter().map(|e| e.prompt_text.clone()).collect()
    }
}

fn understanding() -> StructuredUnderstanding {
    StructuredUnderstanding::parse(UNDERSTANDING).unwrap()
}

fn cfg(mu: usize, generations: u32) -> EvolutionConfig {
    EvolutionConfig::new(mu, generations)
}

#[test]
fn understand_parses_a_valid_reply() {
    let kit = Kit::new(vec![rule(&["analysing"], &[UNDERSTANDING])], Budget::default());
    let s = kit.engine(cfg(2, 1)).understand().unwrap();
    assert_eq!(s.suggested_decomposition.len(), 2);
}

#[test]
fn understand_gives_up_after_three_attempts() {
    let kit = Kit::new(vec![rule(&["analysing"], &["no json here"])], Budget::default());
    let err = kit.engine(cfg(2, 1)).understand().unwrap_err();
    assert!(matches!(err, EngineError::ParseError { attempts: 3, .. }), "{err:?}");
    let prompts = kit.prompts();
    assert_eq!(prompts.len(), 3);
    assert!(prompts[1].contains("Attempt 2 of 3"));
    assert!(prompts[2].contains("Attempt 3 of 3"));
}

#[test]
fn empty_requirements_are_invalid() {
    let mut kit = Kit::new(vec![], Budget::default());
    kit.spec.requirements = "  ".into();
    assert!(matches!(kit.engine(cfg(2, 1)).understand(), Err(EngineError::InvalidSpec(_))));
    assert!(kit.prompts().is_empty());
}

fn seed_rules(first: &str, second: &str) -> Vec<MockRule> {
    vec![
        rule(&["Write the generation prompt"], &["Produce a candidate."]),
        rule(&["Produce a candidate.", "Candidate 1 of"], &[first]),
        rule(&["Produce a candidate.", "Candidate 2 of"], &[second]),
    ]
}

#[test]
fn seed_population_of_two() {
    let a = draft(&[("lisr_k", "method = lisr\nk = 1")], &[]);
    let b = draft(&[("lisr_k", "method = lisr\nk = 2")], &[]);
    let kit = Kit::new(seed_rules(&a, &b), Budget::default());
    let pop = kit.engine(cfg(2, 1)).seed_population(&understanding(), 2).unwrap();
    assert_eq!(pop.len(), 2);
    assert!(pop.iter().all(|i| i.origin == Origin::Seed && i.generation == 0 && i.fitness().is_finite()));
    assert_ne!(pop[0].id, pop[1].id);
}

#[test]
fn seed_repair_round() {
    let broken = draft(&[("lisr_k", "method = lisr\nk = lots")], &[]);
    let fixed = draft(&[("lisr_k", "method = lisr\nk = 2")], &[]);
    let mut rules = seed_rules(&broken, &broken);
    rules.insert(0, rule(&["This candidate failed validation"], &[&fixed]));
    let kit = Kit::new(rules, Budget::default());
    let pop = kit.engine(cfg(2, 1)).seed_population(&understanding(), 1).unwrap();
    assert_eq!(pop.len(), 1);
    let repairs: Vec<String> = kit.prompts().into_iter().filter(|p| p.contains("failed validation")).collect();
    assert_eq!(repairs.len(), 1);
    assert!(repairs[0].contains("ValueError"), "the report reaches the repair prompt");
}

#[test]
fn seed_population_exhausts_the_budget() {
    let a = draft(&[("lisr_k", "method = lisr")], &[]);
    let kit = Kit::new(
        seed_rules(&a, &a),
        Budget {
            max_calls: Some(2),
            max_tokens: None,
        },
    );
    let err = kit.engine(cfg(3, 1)).seed_population(&understanding(), 3).unwrap_err();
    assert!(matches!(err, EngineError::SeedExhausted { needed: 3, .. }), "{err:?}");
}

fn two_unit_parent(kit: &Kit) -> Individual {
    kit.individual(solution(
        &[("lisr_k", "method = lisr\nk = 1"), ("greedy_matrix", "select = diagonal")],
        &[("lisr_k", "greedy_matrix")],
    ))
}

fn mutate_only(mu: usize, lambda_f: usize) -> EvolutionConfig {
    let mut c = cfg(mu, 1);
    c.functional_offspring = Some(lambda_f);
    c.structural_offspring = Some(0);
    c.operator_weights = OperatorWeights {
        reflect: 0.0,
        crossover: 0.0,
        mutate: 1.0,
    };
    c
}

#[test]
fn mutation_rewrites_exactly_one_unit() {
    let kit = Kit::new(
        vec![
            rule(&["Perturb the unit `greedy_matrix`"], &["```\nselect = row_norm\n```"]),
            rule(&["Perturb the unit `lisr_k`"], &["```\nmethod = lisr\nk = 3\n```"]),
        ],
        Budget::default(),
    );
    let parent = two_unit_parent(&kit);
    let engine = kit.engine(mutate_only(2, 1));
    let out = engine.evolve_functional(std::slice::from_ref(&parent), &ReflectionMemory::new(3), 1);
    assert_eq!(out.len(), 1);
    let child = &out[0];
    assert_eq!(child.origin, Origin::Functional);
    assert_eq!(child.parents, vec![parent.id.clone()]);
    let changed: Vec<&String> = child
        .solution
        .units
        .keys()
        .filter(|n| child.solution.units[*n].source != parent.solution.units[*n].source)
        .collect();
    assert_eq!(changed.len(), 1);
    let node = engine.lineage().nodes.into_iter().find(|n| n.id == child.id).unwrap();
    assert_eq!(node.operator.as_deref(), Some("mutate"));
    assert_eq!(node.unit.as_ref(), Some(changed[0]));
}

#[test]
fn no_functional_slots_means_no_offspring() {
    let kit = Kit::new(vec![], Budget::default());
    let parent = two_unit_parent(&kit);
    let out = kit.engine(mutate_only(2, 0)).evolve_functional(&[parent], &ReflectionMemory::new(3), 1);
    assert!(out.is_empty());
    assert!(kit.prompts().is_empty());
}

#[test]
fn uncompilable_offspring_is_dropped_with_an_event() {
    let kit = Kit::new(vec![rule(&["Perturb the unit"], &["```\nselect = ??? \n```"])], Budget::default());
    let parent = two_unit_parent(&kit);
    let engine = kit.engine(mutate_only(2, 1));
    let out = engine.evolve_functional(&[parent], &ReflectionMemory::new(3), 1);
    assert!(out.is_empty());
    assert!(engine.lineage().events.iter().any(|e| e.kind == "offspring_dropped"));
}

#[test]
fn crossover_records_the_donor() {
    let mut c = mutate_only(2, 1);
    c.operator_weights = OperatorWeights {
        reflect: 0.0,
        crossover: 1.0,
        mutate: 0.0,
    };
    let kit = Kit::new(vec![rule(&["Two candidates implement the unit"], &["```\nselect = row_norm\n```"])], Budget::default());
    let p1 = two_unit_parent(&kit);
    let p2 = kit.individual(solution(
        &[("lisr_k", "method = lisr\nk = 2"), ("greedy_matrix", "select = row_norm")],
        &[("lisr_k", "greedy_matrix")],
    ));
    let engine = kit.engine(c);
    let out = engine.evolve_functional(&[p1.clone(), p2.clone()], &ReflectionMemory::new(3), 1);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].parents.len(), 1);
    let node = engine.lineage().nodes.into_iter().find(|n| n.id == out[0].id).unwrap();
    let donor = node.donor.expect("donor recorded");
    assert!(donor == p1.id || donor == p2.id);
    assert_ne!(donor, out[0].parents[0]);
}

fn structural_only() -> EvolutionConfig {
    let mut c = cfg(2, 1);
    c.functional_offspring = Some(0);
    c.structural_offspring = Some(1);
    c
}

#[test]
fn recombination_mixes_units_across_parents() {
    let composed = draft(
        &[
            ("lisr_k", "method = lisr\nk = 2"),
            ("b", "select = row_norm"),
            ("c", "srk = solve"),
            ("glue", "note = joins b and c"),
        ],
        &[("lisr_k", "glue"), ("glue", "b"), ("glue", "c")],
    );
    let kit = Kit::new(vec![rule(&["Compose a new solution"], &[&composed])], Budget::default());
    let w1 = kit.individual(solution(&[("lisr_k", "method = lisr"), ("b", "select = row_norm")], &[("lisr_k", "b")]));
    let w2 = kit.individual(solution(&[("lisr_k", "method = lisr\nk = 2"), ("c", "srk = solve")], &[("lisr_k", "c")]));
    let out = kit.engine(structural_only()).evolve_structural(&[w1.clone(), w2.clone()], &ReflectionMemory::new(3), 1).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].origin, Origin::Structural);
    let mut parents = out[0].parents.clone();
    parents.sort();
    let mut expected = vec![w1.id, w2.id];
    expected.sort();
    assert_eq!(parents, expected);
    assert_eq!(out[0].solution.units.len(), 4);
    let prompt = &kit.prompts()[0];
    assert!(prompt.contains("select = row_norm") && prompt.contains("srk = solve"), "full inventories shown");
}

#[test]
fn dangling_reference_after_failed_repair_is_dropped() {
    let dangling = draft(&[("lisr_k", "method = lisr")], &[("lisr_k", "helper")]);
    let kit = Kit::new(
        vec![
            rule(&["Compose a new solution"], &[&dangling]),
            rule(&["This candidate failed validation"], &[&dangling]),
        ],
        Budget::default(),
    );
    let w1 = kit.individual(solution(&[("lisr_k", "method = lisr")], &[]));
    let w2 = kit.individual(solution(&[("lisr_k", "method = lisr\nk = 2")], &[]));
    let engine = kit.engine(structural_only());
    let out = engine.evolve_structural(&[w1, w2], &ReflectionMemory::new(3), 1).unwrap();
    assert!(out.is_empty());
    assert_eq!(kit.prompts().len(), 2, "one recombination and one repair");
    assert!(engine.lineage().events.iter().any(|e| e.kind == "recombination_invalid"));
}

#[test]
fn structural_needs_two_parents() {
    let kit = Kit::new(vec![], Budget::default());
    let w = kit.individual(solution(&[("lisr_k", "method = lisr")], &[]));
    let err = kit.engine(structural_only()).evolve_structural(&[w], &ReflectionMemory::new(3), 1).unwrap_err();
    assert!(matches!(err, EngineError::Precondition(_)));
}

#[test]
fn long_term_memory_evicts_and_degrades() {
    let kit = Kit::new(vec![rule(&["Summarise what the search has learned"], &["ranks matter"])], Budget::default());
    let ind = kit.individual(solution(&[("lisr_k", "method = lisr")], &[]));
    let mut c = cfg(2, 1);
    c.memory_capacity = 2;
    let engine = kit.engine(c);
    let mut mem = ReflectionMemory::new(2);
    for g in 0..3 {
        mem = engine.reflect_long_term(
            &mem,
            &GenerationSummary {
                generation: g,
                population: std::slice::from_ref(&ind),
                offspring: &[],
            },
        );
    }
    let gens: Vec<u32> = mem.entries.iter().map(|e| e.generation).collect();
    assert_eq!(gens, [1, 2]);
    assert_eq!(mem.entries[1].summary_text, "ranks matter");

    let down = Kit::new(vec![], Budget::default());
    let bad = down.individual(solution(&[("lisr_k", "raise = boom")], &[]));
    let mem = down.engine(cfg(2, 1)).reflect_long_term(
        &ReflectionMemory::new(2),
        &GenerationSummary {
            generation: 4,
            population: std::slice::from_ref(&ind),
            offspring: &[bad],
        },
    );
    let entry: &MemoryEntry = &mem.entries[0];
    assert!(entry.summary_text.starts_with("best fitness "), "{}", entry.summary_text);
    assert!(entry.summary_text.contains("probes x1"), "{}", entry.summary_text);
}

fn run_rules() -> Vec<MockRule> {
    let seeds = [
        draft(&[("lisr_k", "method = lisr\nk = 1"), ("refresh", "select = diagonal")], &[("lisr_k", "refresh")]),
        draft(&[("lisr_k", "method = lisr\nk = 2"), ("refresh", "select = row_norm")], &[("lisr_k", "refresh")]),
        draft(&[("lisr_k", "method = lisr\nk = 3"), ("refresh", "srk = solve")], &[("lisr_k", "refresh")]),
    ];
    let seeds: Vec<&str> = seeds.iter().map(String::as_str).collect();
    vec![
        rule(&["the unit `lisr_k`"], &["```\nmethod = lisr\nk = 2\n```", "```\nraise = boom\n```", "```\nsleep_ms = 60000\n```"]),
        rule(&["the unit `refresh`"], &["```\nselect = row_norm\nsrk = solve\n```", "```\nselect = ?\n```"]),
        rule(&["Compose a new solution"], &[seeds[2], "not json"]),
        rule(&["This candidate failed validation"], &[seeds[0]]),
        rule(&["Summarise what the search has learned"], &["keep going"]),
        rule(&["analysing"], &[UNDERSTANDING]),
        rule(&["Write the generation prompt"], &["Produce a candidate."]),
        rule(&["Produce a candidate."], &seeds),
    ]
}

fn check_run_invariants(snapshots: &[Snapshot], mu: usize) {
    for pair in snapshots.windows(2) {
        assert!(pair[1].best_fitness <= pair[0].best_fitness, "monotone elite");
    }
    for (t, s) in snapshots.iter().enumerate() {
        assert_eq!(s.population.len(), mu, "generation {t}");
        for ind in &s.population {
            for p in &ind.parents {
                assert!(
                    snapshots[..t].iter().any(|e| e.population.iter().any(|i| &i.id == p)),
                    "parent {p} of {} exists earlier",
                    ind.id
                );
            }
        }
    }
}

#[test]
fn run_produces_one_snapshot_per_generation_and_survives_bad_offspring() {
    let limits = ExecutionLimits {
        wall_time_limit: 2.0,
        ..ExecutionLimits::default()
    };
    let kit = Kit::with_limits(run_rules(), Budget::default(), limits);
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path(), "t").unwrap();
    let mut c = cfg(2, 2);
    c.rng_seed = 5;
    let mut seen = Vec::new();
    let result = kit.engine(c).run(Some(&run), &mut |s| seen.push(s.generation)).unwrap();
    assert_eq!(seen, [0, 1, 2]);
    assert_eq!(result.snapshots.len(), 3);
    assert_eq!(run.snapshots().unwrap(), result.snapshots);
    assert_eq!(run.lineage().unwrap(), result.lineage);
    check_run_invariants(&result.snapshots, 2);
    assert!(kit.sandbox.orphans().is_empty());
}

#[test]
fn flat_fitness_stops_early() {
    let seeds = draft(&[("lisr_k", "method = lisr\nk = 2")], &[]);
    let other = draft(&[("lisr_k", "method = lisr\nk = 2\nnote = same behaviour")], &[]);
    let rules = vec![
        rule(&["the unit `lisr_k`"], &["```\nmethod = lisr\nk = 2\nnote = again\n```"]),
        rule(&["Compose a new solution"], &[&seeds]),
        rule(&["Summarise"], &["flat"]),
        rule(&["analysing"], &[UNDERSTANDING]),
        rule(&["Write the generation prompt"], &["Produce a candidate."]),
        rule(&["Produce a candidate.", "Candidate 1 of"], &[&seeds]),
        rule(&["Produce a candidate.", "Candidate 2 of"], &[&other]),
    ];
    let kit = Kit::new(rules, Budget::default());
    let mut c = cfg(2, 5);
    c.patience = Some(1);
    c.epsilon = 0.0;
    let result = kit.engine(c).run(None, &mut |_| {}).unwrap();
    assert!(result.stopped_early);
    assert_eq!(result.snapshots.len(), 2, "stops after generation 1");
}

#[test]
fn zero_generations_are_rejected() {
    let kit = Kit::new(vec![], Budget::default());
    assert!(matches!(kit.engine(cfg(2, 0)).run(None, &mut |_| {}), Err(EngineError::Config(_))));
}

#[test]
fn seed_exhaustion_leaves_partial_artifacts() {
    let kit = Kit::new(
        run_rules(),
        Budget {
            max_calls: Some(3),
            max_tokens: None,
        },
    );
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path(), "t").unwrap();
    let err = kit.engine(cfg(3, 1)).run(Some(&run), &mut |_| {}).unwrap_err();
    assert!(matches!(err, EngineError::SeedExhausted { .. }), "{err:?}");
    assert!(run.path().join(LINEAGE_FILE).exists());
}
