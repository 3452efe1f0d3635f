//! Out-of-process candidate execution and rule-set validation.

mod exec;
pub mod protocol;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use cae_core::model::{
    scalarize_fitness, CodeSolution, ProblemSpec, RuleKind, RuleSet, RuleVerdict, Severity, ValidationReport,
    ValidationRule,
};
use serde_json::Value;

pub use exec::{group_alive, run_session, ExecutionLimits, ShimCommand};

use crate::domains::{Domain, Metrics};
use crate::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("CompileFailure: {0}")]
    CompileFailure(String),
    #[error("RuntimeFailure: {error}")]
    RuntimeFailure { error: String, traceback: String },
    #[error("Timeout after {0} s")]
    Timeout(f64),
    #[error("ProtocolError: {0}")]
    ProtocolError(String),
    #[error("OutputOverflow: more than {0} bytes on stdout")]
    OutputOverflow(usize),
    #[error("could not start shim: {0}")]
    Spawn(String),
}

/// One shim process per call; [`execute_candidate`] without a worker pool.
pub fn execute_candidate(
    solution: &CodeSolution,
    request: &Value,
    limits: &ExecutionLimits,
    shim: &ShimCommand,
) -> Result<Value, ExecError> {
    run_session(solution, Some(request), limits, shim, &mut |_| {}).map(|v| v.unwrap_or(Value::Null))
}

/// Bounded pool of shim processes. Every spawned pid is remembered so tests
/// can assert nothing outlives its call.
pub struct Sandbox {
    shim: ShimCommand,
    limits: ExecutionLimits,
    workers: Semaphore,
    spawned: Mutex<Vec<u32>>,
}

impl Sandbox {
    pub fn new(shim: ShimCommand, limits: ExecutionLimits, workers: usize) -> Result<Self, String> {
        limits.validate()?;
        Ok(Sandbox {
            shim,
            limits,
            workers: Semaphore::new(workers),
            spawned: Mutex::new(Vec::new()),
        })
    }

    pub fn limits(&self) -> &ExecutionLimits {
        &self.limits
    }

    pub fn workers(&self) -> usize {
        self.workers.limit()
    }

    fn session(&self, solution: &CodeSolution, request: Option<&Value>) -> Result<Option<Value>, ExecError> {
        let _permit = self.workers.acquire();
        run_session(solution, request, &self.limits, &self.shim, &mut |pid| {
            self.spawned.lock().expect("pid log").push(pid)
        })
    }

    pub fn execute(&self, solution: &CodeSolution, request: &Value) -> Result<Value, ExecError> {
        self.session(solution, Some(request)).map(|v| v.unwrap_or(Value::Null))
    }

    pub fn dry_load(&self, solution: &CodeSolution) -> Result<(), ExecError> {
        self.session(solution, None).map(|_| ())
    }

    pub fn spawned_pids(&self) -> Vec<u32> {
        self.spawned.lock().expect("pid log").clone()
    }

    /// Pids of spawned process groups that still have a live member.
    pub fn orphans(&self) -> Vec<u32> {
        self.spawned_pids().into_iter().filter(|&p| group_alive(p)).collect()
    }

    /// Applies `rules` in order: static checks, functional probes, then
    /// performance scoring. Once a blocking rule fails the remaining rules are
    /// recorded as skipped.
    pub fn validate(&self, solution: &CodeSolution, rules: &RuleSet, spec: &ProblemSpec, domain: &dyn Domain) -> ValidationReport {
        let started = Instant::now();
        let mut per_rule = Vec::with_capacity(rules.len());
        let mut metrics = BTreeMap::new();
        let mut blocked: Option<String> = None;
        let mut ordered: Vec<&ValidationRule> = rules.iter().collect();
        ordered.sort_by_key(|r| match r.kind {
            RuleKind::Static => 0,
            RuleKind::Functional => 1,
            RuleKind::Performance => 2,
        });
        let mut verdicts: BTreeMap<&str, RuleVerdict> = BTreeMap::new();
        for rule in ordered {
            let verdict = match &blocked {
                Some(by) => Err(format!("skipped: blocking rule `{by}` failed")),
                None => match rule.kind {
                    RuleKind::Static => self.static_rule(solution, rule, domain),
                    RuleKind::Functional => self.functional_rule(solution, rule, domain),
                    RuleKind::Performance => self.performance_rule(solution, rule, domain, &mut metrics),
                },
            };
            let (passed, detail) = match verdict {
                Ok(detail) => (true, detail),
                Err(detail) => (false, detail),
            };
            if !passed && rule.severity == Severity::Blocking && blocked.is_none() {
                blocked = Some(rule.rule_id.clone());
            }
            verdicts.insert(
                rule.rule_id.as_str(),
                RuleVerdict {
                    rule_id: rule.rule_id.clone(),
                    passed,
                    detail,
                },
            );
        }
        for rule in rules.iter() {
            per_rule.push(verdicts.remove(rule.rule_id.as_str()).expect("every rule judged"));
        }
        let fitness = if blocked.is_none() {
            scalarize_fitness(&metrics, spec).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        ValidationReport {
            per_rule,
            metrics,
            fitness,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }

    fn static_rule(&self, solution: &CodeSolution, rule: &ValidationRule, domain: &dyn Domain) -> Result<String, String> {
        match rule.param_str("check") {
            Some("dry_load") => {
                self.dry_load(solution).map_err(|e| e.to_string())?;
                if ExecutionLimits::memory_enforced() {
                    Ok("loaded".into())
                } else {
                    Ok("loaded; memory limit not enforced on this platform".into())
                }
            }
            Some("dag") => solution
                .validate()
                .map(|_| "acyclic, all references resolve".into())
                .map_err(|e| e.to_string()),
            Some("entrypoint_signature") => {
                let entry = solution
                    .units
                    .get(&solution.entrypoint)
                    .ok_or_else(|| format!("entrypoint `{}` missing", solution.entrypoint))?;
                let missing: Vec<&str> = domain
                    .entry_params()
                    .iter()
                    .copied()
                    .filter(|p| !entry.signature.has_param(p))
                    .collect();
                if missing.is_empty() {
                    Ok("signature conforms".into())
                } else {
                    Err(format!("entrypoint `{}` lacks parameter(s) {}", entry.name, missing.join(", ")))
                }
            }
            other => Err(format!("unknown static check {other:?}")),
        }
    }

    fn functional_rule(&self, solution: &CodeSolution, rule: &ValidationRule, domain: &dyn Domain) -> Result<String, String> {
        let wanted: Option<Vec<String>> = rule
            .params
            .get("probes")
            .and_then(|v| serde_json::from_value(v.clone()).ok());
        let probes: Vec<_> = domain
            .probes()
            .probes
            .into_iter()
            .filter(|p| wanted.as_ref().is_none_or(|w| w.contains(&p.probe_id)))
            .collect();
        if probes.is_empty() {
            return Err("no probes selected".into());
        }
        for probe in &probes {
            let response = self
                .execute(solution, &probe.request)
                .map_err(|e| format!("probe `{}`: {e}", probe.probe_id))?;
            probe
                .expected
                .check(&response)
                .and_then(|_| domain.check_probe(probe, &response))
                .map_err(|e| format!("probe `{}`: {e}", probe.probe_id))?;
        }
        Ok(format!("{} probe(s) passed", probes.len()))
    }

    fn performance_rule(
        &self,
        solution: &CodeSolution,
        rule: &ValidationRule,
        domain: &dyn Domain,
        metrics: &mut Metrics,
    ) -> Result<String, String> {
        let invoke = |request: &Value| self.execute(solution, request);
        match domain.evaluate(rule, &invoke) {
            Ok(m) => {
                metrics.extend(m);
                Ok("scored".into())
            }
            Err(e) => {
                metrics.extend(domain.worst_case(rule));
                Err(format!("{e}; worst-case metrics recorded"))
            }
        }
    }
}
