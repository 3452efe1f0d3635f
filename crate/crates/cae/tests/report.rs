mod common;

use std::collections::BTreeMap;
use std::fs;

use cae::engine::{RunDir, Snapshot};
use cae::report::{self, parse_csv, rows_from_snapshots, Format, ReportRow, CONVERGENCE_CSV, REPORT_CSV};
use cae::run;
use cae_core::evolution::ReflectionMemory;
use cae_core::model::{Individual, Origin, ValidationReport, ValidationRule};
use serde_json::json;

fn scored(source: &str, metrics: &[(&str, f64)], fitness: f64) -> Individual {
    let report = ValidationReport {
        per_rule: vec![],
        metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        fitness,
        wall_time: 0.0,
    };
    Individual::new(common::quad_candidate(source), 0, vec![], Origin::Seed)
        .unwrap()
        .with_report(report)
}

fn tsp_rule() -> Vec<ValidationRule> {
    vec![serde_json::from_value(json!({
        "rule_id": "perf", "kind": "performance", "severity": "scoring",
        "params": {"algorithm": "ACO", "iterations": 10, "population_size": 4, "seeds": [1, 2, 3], "instances": [{"name": "i1", "random": {"n": 5, "seed": 1}}, {"name": "i2", "random": {"n": 5, "seed": 2}}]}
    }))
    .unwrap()]
}

#[test]
fn rows_compare_final_best_against_measured_baseline() {
    let memory = ReflectionMemory::new(2);
    let seed = scored("method = lisr", &[("obj:i1", 100.0), ("base:i1", 100.0), ("obj:i2", 100.0), ("base:i2", 100.0)], 1.0);
    let best = scored("method = lisr\nk = 2", &[("obj:i1", 100.0), ("base:i1", 100.0), ("obj:i2", 75.0), ("base:i2", 100.0)], 0.5);
    let snapshots = vec![Snapshot::new(0, std::slice::from_ref(&seed), &memory), Snapshot::new(1, &[best, seed], &memory)];
    let rows = rows_from_snapshots(&snapshots, &tsp_rule()).unwrap();
    let gaps: Vec<(&str, f64)> = rows.iter().map(|r| (r.instance.as_str(), r.gap_percent)).collect();
    assert_eq!(gaps, [("i1", 0.0), ("i2", 25.0)]);
    assert!(rows.iter().all(|r| r.runs_averaged == 3 && r.seeds == [1, 2, 3]));
    assert_eq!(report::convergence_csv(&snapshots).lines().count(), 3);
}

#[test]
fn csv_round_trips() {
    let rows = vec![
        ReportRow::new("a", 10.0, 9.5, 3, vec![1, 2, 3]).unwrap(),
        ReportRow::new("b", 7.25, 8.0, 1, vec![4]).unwrap(),
    ];
    let text = report::to_csv(&rows);
    assert_eq!(parse_csv(&text).unwrap(), rows);
    assert!(ReportRow::new("z", 0.0, 1.0, 1, vec![]).is_err());
}

#[test]
fn fixture_run_report_is_faithful() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::quad_config(tmp.path());
    let done = run::evolve(&cfg, &mut |_| {}).unwrap();
    let dir = done.dir.path();
    let rows = parse_csv(&fs::read_to_string(dir.join(REPORT_CSV)).unwrap()).unwrap();
    assert!(!rows.is_empty());
    for r in &rows {
        let recomputed = (r.base_obj - r.cae_obj) / r.base_obj * 100.0;
        assert!((recomputed - r.gap_percent).abs() <= 1e-9, "{r:?}");
        assert_eq!(r.runs_averaged, r.seeds.len());
    }
    let snapshots = RunDir::open(dir).snapshots().unwrap();
    assert_eq!(snapshots.len(), cfg.evolution.max_generations as usize + 1);
    let convergence = fs::read_to_string(dir.join(CONVERGENCE_CSV)).unwrap();
    assert_eq!(convergence.lines().count(), snapshots.len() + 1);

    let table = report::write_report(dir, Format::Table).unwrap();
    for r in &rows {
        assert!(table.contains(&r.instance));
    }
}
