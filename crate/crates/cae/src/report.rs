//! Report tables, CSV emission and the desk-scale benchmark harnesses.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cae_core::floatfmt::Float;
use cae_core::model::{CodeSolution, RuleKind, RuleSet, ValidationRule};
use cae_core::quadratic::{
    generate_instance, iterations_to_tolerance, lisr_solve_timed, QuadraticInstance, SolverVariant, TracePoint, Variant,
};
use cae_core::tsp::{gap_percent, parse_instance, Algorithm, TspInstance};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::domains::{quadratic, tsp};
use crate::engine::{read_json, RunDir, Snapshot, CONFIG_FILE, LINEAGE_FILE, UNDERSTANDING_FILE};
use crate::reference;
use crate::sandbox::{ExecError, Sandbox};

pub const REPORT_CSV: &str = "report.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const TABLE_HEADER: [&str; 4] = ["Instance", "Base", "CAE", "Gap(%)"];
pub const CSV_HEADER: &str = "instance,base_obj,cae_obj,gap_percent,runs_averaged,seeds";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("run directory {0} holds no snapshots")]
    EmptyRun(PathBuf),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("gap for `{instance}`: {message}")]
    Gap { instance: String, message: String },
    #[error("malformed report: {0}")]
    Parse(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: String,
    pub base_obj: f64,
    pub cae_obj: f64,
    pub gap_percent: f64,
    pub runs_averaged: usize,
    pub seeds: Vec<u64>,
}

impl ReportRow {
    pub fn new(instance: impl Into<String>, base_obj: f64, cae_obj: f64, runs_averaged: usize, seeds: Vec<u64>) -> Result<Self, ReportError> {
        let instance = instance.into();
        let gap = gap_percent(base_obj, cae_obj).map_err(|e| ReportError::Gap {
            instance: instance.clone(),
            message: e.to_string(),
        })?;
        Ok(ReportRow {
            instance,
            base_obj,
            cae_obj,
            gap_percent: gap,
            runs_averaged,
            seeds,
        })
    }
}

/// What the run's performance rule says about how rows were averaged.
#[derive(Debug, Clone, Default)]
struct Provenance {
    algorithm: Option<Algorithm>,
    seeds: Vec<u64>,
    scenario_seeds: Vec<(String, u64)>,
}

impl Provenance {
    fn from_rules(rules: &[ValidationRule]) -> Self {
        let mut p = Provenance::default();
        for rule in rules.iter().filter(|r| r.kind == RuleKind::Performance) {
            if let Ok(t) = tsp::PerformanceParams::from_rule(rule) {
                p.algorithm = Some(t.algorithm);
                p.seeds = t.seeds;
            } else if let Ok(q) = quadratic::PerformanceParams::from_rule(rule) {
                p.scenario_seeds = q.scenarios.into_iter().map(|s| (s.id, s.seed)).collect();
            }
        }
        p
    }

    fn load(dir: &Path) -> Self {
        let rules = read_json::<RunConfig>(&dir.join(CONFIG_FILE))
            .and_then(|cfg| read_json::<Vec<ValidationRule>>(&cfg.rules));
        match rules {
            Ok(rules) => Provenance::from_rules(&rules),
            Err(e) => {
                log::warn!("no rule provenance for {}: {e}", dir.display());
                Provenance::default()
            }
        }
    }

    fn seeds_for(&self, instance: &str) -> Vec<u64> {
        match self.scenario_seeds.iter().find(|(id, _)| id == instance) {
            Some((_, seed)) => vec![*seed],
            None => self.seeds.clone(),
        }
    }
}

/// Rows comparing the final best individual against the baseline. The
/// baseline is `base:<id>` when the domain measures one, otherwise the best
/// seed individual's `obj:<id>`.
pub fn rows_from_snapshots(snapshots: &[Snapshot], rules: &[ValidationRule]) -> Result<Vec<ReportRow>, ReportError> {
    rows_with(snapshots, &Provenance::from_rules(rules))
}

fn rows_with(snapshots: &[Snapshot], prov: &Provenance) -> Result<Vec<ReportRow>, ReportError> {
    let (Some(first), Some(last)) = (snapshots.first(), snapshots.last()) else {
        return Err(ReportError::Parse("no snapshots".into()));
    };
    let final_metrics = match last.best().and_then(|b| b.report.as_ref()) {
        Some(r) => &r.metrics,
        None => return Ok(Vec::new()),
    };
    let seed_metrics = first.best().and_then(|b| b.report.as_ref()).map(|r| &r.metrics);
    let mut rows = Vec::new();
    for (key, &cae) in final_metrics {
        let Some(id) = key.strip_prefix("obj:") else { continue };
        let base = final_metrics
            .get(&format!("base:{id}"))
            .or_else(|| seed_metrics.and_then(|m| m.get(key)));
        let Some(&base) = base else {
            log::warn!("no baseline for `{id}`");
            continue;
        };
        let seeds = prov.seeds_for(id);
        rows.push(ReportRow::new(id, base, cae, seeds.len().max(1), seeds)?);
    }
    Ok(rows)
}

pub fn rows_for_run(dir: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let snapshots = RunDir::open(dir).snapshots().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ReportError::EmptyRun(dir.to_path_buf()),
        _ => e.into(),
    })?;
    if snapshots.is_empty() {
        return Err(ReportError::EmptyRun(dir.to_path_buf()));
    }
    rows_with(&snapshots, &Provenance::load(dir))
}

fn fmt_seeds(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.instance,
            Float(r.base_obj),
            Float(r.cae_obj),
            Float(r.gap_percent),
            r.runs_averaged,
            fmt_seeds(&r.seeds)
        );
    }
    out
}

fn parse_f64(s: &str) -> Result<f64, ReportError> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        _ => s.parse().map_err(|_| ReportError::Parse(format!("not a number: `{s}`"))),
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, ReportError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(ReportError::Parse("unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(ReportError::Parse(format!("expected 6 fields: `{line}`")));
            }
            let seeds = f[5]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| ReportError::Parse(format!("bad seed `{s}`"))))
                .collect::<Result<_, _>>()?;
            Ok(ReportRow {
                instance: f[0].to_string(),
                base_obj: parse_f64(f[1])?,
                cae_obj: parse_f64(f[2])?,
                gap_percent: parse_f64(f[3])?,
                runs_averaged: f[4].parse().map_err(|_| ReportError::Parse(format!("bad count `{}`", f[4])))?,
                seeds,
            })
        })
        .collect()
}

fn reference_text(instance: &str, algorithm: Option<Algorithm>) -> String {
    if let Some((ghpp, reevo, cae)) = reference::instance_gaps(instance) {
        return format!("GHPP {ghpp} / ReEvo {reevo} / CAE {cae}");
    }
    if let (Some(col), Some(alg)) = (reference::size_column(instance), algorithm) {
        let name = alg.as_str();
        let gap = |suffix: &str| {
            reference::METHOD_RESULTS
                .iter()
                .find(|(m, _)| *m == format!("{name}+{suffix}"))
                .map(|(_, cells)| cells[col].gap)
        };
        if let (Some(e), Some(r), Some(c)) = (gap("EOH"), gap("ReEvo"), gap("CAE")) {
            return format!("EOH {e} / ReEvo {r} / CAE {c}");
        }
    }
    "-".into()
}

/// Fixed-width table; the trailing column quotes published gaps where known.
pub fn render_table(rows: &[ReportRow], algorithm: Option<Algorithm>) -> String {
    let mut cells: Vec<[String; 7]> = vec![[
        TABLE_HEADER[0].into(),
        TABLE_HEADER[1].into(),
        TABLE_HEADER[2].into(),
        TABLE_HEADER[3].into(),
        "Runs".into(),
        "Seeds".into(),
        "Published Gap(%)".into(),
    ]];
    for r in rows {
        cells.push([
            r.instance.clone(),
            Float(r.base_obj).to_string(),
            Float(r.cae_obj).to_string(),
            Float(r.gap_percent).to_string(),
            r.runs_averaged.to_string(),
            fmt_seeds(&r.seeds),
            reference_text(&r.instance, algorithm),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "| {} |", line.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
        }
    }
    out
}

pub fn convergence_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from("generation,best_fitness\n");
    for s in snapshots {
        let _ = writeln!(out, "{},{}", s.generation, Float(s.best_fitness));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

/// Writes `report.csv` and `convergence.csv` into the run directory and
/// returns the report in the requested format.
pub fn write_report(dir: &Path, format: Format) -> Result<String, ReportError> {
    let run = RunDir::open(dir);
    let snapshots = run.snapshots().unwrap_or_default();
    if snapshots.is_empty() {
        return Err(ReportError::EmptyRun(dir.to_path_buf()));
    }
    let prov = Provenance::load(dir);
    let rows = rows_with(&snapshots, &prov)?;
    let csv = to_csv(&rows);
    fs::write(dir.join(REPORT_CSV), &csv)?;
    fs::write(dir.join(CONVERGENCE_CSV), convergence_csv(&snapshots))?;
    Ok(match format {
        Format::Csv => csv,
        Format::Table => render_table(&rows, prov.algorithm),
    })
}

/// Artifacts that must match byte for byte between a run and its replay.
pub fn deterministic_artifacts(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut names = vec![LINEAGE_FILE.to_string(), UNDERSTANDING_FILE.to_string()];
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.starts_with("generation_") || name == REPORT_CSV || name == CONVERGENCE_CSV {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Names of artifacts that differ or exist on one side only.
pub fn compare_runs(a: &Path, b: &Path) -> std::io::Result<Vec<String>> {
    let mut names = deterministic_artifacts(a)?;
    names.extend(deterministic_artifacts(b)?);
    names.sort();
    names.dedup();
    Ok(names
        .into_iter()
        .filter(|n| match (fs::read(a.join(n)), fs::read(b.join(n))) {
            (Ok(x), Ok(y)) => x != y,
            (Err(_), Err(_)) => false,
            _ => true,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub n: usize,
    pub d: usize,
    pub xis: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub rel_tol: f64,
}

impl BenchParams {
    pub fn new(n: usize, d: usize, xis: Vec<f64>, seeds: Vec<u64>, variants: Vec<Variant>) -> Self {
        BenchParams {
            n,
            d,
            xis,
            seeds,
            variants,
            k: 2.min(d),
            max_iter: 2000,
            tol: 1e-12,
            rel_tol: 1e-6,
        }
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::A => "a",
        Variant::B => "b",
    }
}

pub fn parse_variant(s: &str) -> Option<Variant> {
    match s.to_ascii_lowercase().as_str() {
        "a" => Some(Variant::A),
        "b" => Some(Variant::B),
        _ => None,
    }
}

/// One (ξ, seed, variant) cell. Suboptimality is measured from the lowest
/// traced objective, so it can be recomputed from the trace file alone.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub variant: Variant,
    pub xi: f64,
    pub seed: u64,
    pub f_star: f64,
    pub kappa: f64,
    pub iterations_to_tol: Option<usize>,
    pub final_suboptimality: Option<f64>,
    pub trace: Vec<TracePoint>,
    pub status: String,
}

impl BenchCell {
    pub fn trace_file(&self) -> String {
        format!("trace_{}_xi{}_seed{}.csv", variant_name(self.variant), self.xi, self.seed)
    }
}

pub fn run_cell(inst: &QuadraticInstance, variant: Variant, params: &BenchParams) -> BenchCell {
    let (_, f_star) = inst.closed_form_optimum();
    let start = Instant::now();
    let outcome = lisr_solve_timed(
        inst,
        SolverVariant::new(variant, params.k),
        &vec![0.0; inst.d],
        params.max_iter,
        params.tol,
        &mut || start.elapsed().as_secs_f64(),
    );
    let mut cell = BenchCell {
        variant,
        xi: inst.xi,
        seed: inst.rng_seed,
        f_star,
        kappa: inst.condition_number(),
        iterations_to_tol: None,
        final_suboptimality: None,
        trace: Vec::new(),
        status: "ok".into(),
    };
    match outcome {
        Ok(out) => {
            cell.iterations_to_tol = iterations_to_tolerance(&out.trace, f_star, params.rel_tol);
            cell.final_suboptimality = out.trace.iter().map(|p| p.objective).reduce(f64::min).map(|f| f - f_star);
            cell.trace = out.trace;
        }
        Err(e) => cell.status = format!("error: {e}"),
    }
    cell
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("t,objective,elapsed_s\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.t, Float(p.objective), p.elapsed);
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TracePoint>, ReportError> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(ReportError::Parse(format!("trace line `{line}`")));
            }
            Ok(TracePoint {
                t: f[0].parse().map_err(|_| ReportError::Parse(format!("trace line `{line}`")))?,
                objective: parse_f64(f[1])?,
                elapsed: parse_f64(f[2])?,
            })
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "variant,xi,seed,iterations_to_tol,final_suboptimality,f_star,kappa,trace_file,status";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn summary_csv(cells: &[BenchCell]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            variant_name(c.variant),
            c.xi,
            c.seed,
            opt(c.iterations_to_tol),
            opt(c.final_suboptimality.map(Float)),
            Float(c.f_star),
            Float(c.kappa),
            c.trace_file(),
            c.status.replace(',', ";")
        );
    }
    out
}

/// Runs every cell, writing one trace CSV each plus `summary.csv`. Solver
/// errors are recorded in the cell status.
pub fn bench_quad(params: &BenchParams, out_dir: &Path) -> Result<Vec<BenchCell>, ReportError> {
    if params.xis.is_empty() || params.seeds.is_empty() || params.variants.is_empty() {
        return Err(ReportError::Invalid("xi list, seeds and variants must be non-empty".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut cells = Vec::new();
    for &xi in &params.xis {
        for &seed in &params.seeds {
            let inst = generate_instance(params.n, params.d, xi, seed).map_err(|e| ReportError::Invalid(e.to_string()))?;
            for &variant in &params.variants {
                let cell = run_cell(&inst, variant, params);
                fs::write(out_dir.join(cell.trace_file()), trace_csv(&cell.trace))?;
                cells.push(cell);
            }
        }
    }
    fs::write(out_dir.join("summary.csv"), summary_csv(&cells))?;
    Ok(cells)
}

/// Loads every `.tsp` file in `dir`, sorted by name.
pub fn load_instances(dir: &Path) -> Result<Vec<TspInstance>, ReportError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsp"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            parse_instance(&text).map_err(|e| ReportError::Parse(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Baseline against `plugin` (or against itself when absent) on every
/// instance in the set.
pub fn eval_tsp(
    instances: &[TspInstance],
    params: &tsp::PerformanceParams,
    plugin: Option<(&Sandbox, &CodeSolution)>,
) -> Result<(Vec<ReportRow>, f64), ReportError> {
    let invoke_plugin = |req: &serde_json::Value| -> Result<serde_json::Value, ExecError> {
        let (sandbox, solution) = plugin.expect("plugin present");
        sandbox.execute(solution, req)
    };
    let invoke_baseline = |req: &serde_json::Value| -> Result<serde_json::Value, ExecError> {
        let alg = req["algorithm"].as_str().and_then(Algorithm::parse).unwrap_or(params.algorithm);
        let edges: Vec<(usize, usize, f64)> =
            serde_json::from_value(req["edges"].clone()).map_err(|e| ExecError::ProtocolError(e.to_string()))?;
        let scores: Vec<Float> = edges.iter().map(|e| Float(cae_core::tsp::BaselineGuide::score(alg, e.2))).collect();
        Ok(serde_json::json!({ "scores": scores }))
    };
    let gap_rows = if plugin.is_some() {
        tsp::evaluate_candidate_gap(instances, params, &invoke_plugin)
    } else {
        tsp::evaluate_candidate_gap(instances, params, &invoke_baseline)
    }
    .map_err(|e| ReportError::Invalid(e.to_string()))?;
    let mut rows = Vec::new();
    for g in gap_rows.0 {
        match g.cae_obj {
            Some(cae) => rows.push(ReportRow::new(g.instance, g.base_obj, cae, g.runs_averaged, g.seeds)?),
            None => log::warn!("{}: plugin failed: {}", g.instance, g.failure.unwrap_or_default()),
        }
    }
    Ok((rows, gap_rows.1))
}

pub fn rules_of(set: &RuleSet) -> Vec<ValidationRule> {
    set.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_gap_recomputation() {
        let rows = vec![
            ReportRow::new("a", 8.0, 8.0, 3, vec![1, 2, 3]).unwrap(),
            ReportRow::new("b", 8.0, 6.0, 3, vec![1, 2, 3]).unwrap(),
            ReportRow::new("c", 3.0, 3.3, 1, vec![]).unwrap(),
        ];
        assert_eq!(rows[0].gap_percent, 0.0);
        assert_eq!(rows[1].gap_percent, 25.0);
        assert!(rows[2].gap_percent < 0.0);
        let back = parse_csv(&to_csv(&rows)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn table_column_order() {
        let rows = vec![ReportRow::new("ts225", 10.0, 9.0, 3, vec![1]).unwrap()];
        let table = render_table(&rows, None);
        let header: Vec<&str> = table.lines().next().unwrap().split('|').map(str::trim).filter(|s| !s.is_empty()).collect();
        assert_eq!(&header[..4], &TABLE_HEADER);
        assert!(table.contains("CAE 4.6"));
    }

    #[test]
    fn reference_column_for_random_sizes() {
        assert_eq!(reference_text("tsp20_1", Some(Algorithm::Kgls)), "EOH 0.6 / ReEvo 0.2 / CAE 11.2");
        assert_eq!(reference_text("tsp20_1", None), "-");
    }

    #[test]
    fn nonpositive_base_is_an_error() {
        assert!(matches!(ReportRow::new("x", 0.0, 1.0, 1, vec![]), Err(ReportError::Gap { .. })));
    }

    #[test]
    fn empty_directory_is_an_empty_run() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_report(dir.path(), Format::Csv), Err(ReportError::EmptyRun(_))));
        assert!(matches!(rows_for_run(&dir.path().join("absent")), Err(ReportError::EmptyRun(_))));
    }

    #[test]
    fn identity_cell_reaches_the_optimum() {
        let inst = QuadraticInstance::new(vec![vec![1.0; 4]; 3], vec![vec![0.0; 4]; 3], 1.0, 0).unwrap();
        let params = BenchParams::new(3, 4, vec![1.0], vec![0], vec![Variant::A]);
        for v in [Variant::A, Variant::B] {
            let cell = run_cell(&inst, v, &params);
            assert_eq!(cell.status, "ok");
            assert!(cell.final_suboptimality.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = vec![
            TracePoint { t: 1, objective: -3.25, elapsed: 0.5 },
            TracePoint { t: 2, objective: f64::INFINITY, elapsed: 1.0 },
        ];
        assert_eq!(parse_trace_csv(&trace_csv(&trace)).unwrap(), trace);
    }
}
