mod common;

use std::collections::BTreeMap;

use cruda::golden;
use cruda::runner::{build_report, load_run, load_runs, run_suite, write_run, ReportOptions, RunManifest, SuiteOptions};
use cruda_core::backend::{CostModel, ScriptLine, ScriptedBackend, ZeroClock};
use cruda_core::dataset::QueryRecord;
use cruda_core::harness::{reliability, MetricsError};
use cruda_core::pipeline::Thor;

fn flaky_line(qid: &str, attempt: u32, repeat: u32) -> ScriptLine {
    ScriptLine {
        query_id: qid.into(),
        stage: "plan".into(),
        attempt,
        repeat: Some(repeat),
        response: "this is not a plan".into(),
        latency_s: golden::SCRIPT_LATENCY_S,
        input_tokens: None,
        output_tokens: None,
    }
}

#[test]
fn a_query_failing_on_some_repeats_is_the_only_fluctuating_one() {
    let (reg, c) = common::corpus();
    let qs = &c.single[..8];
    let flaky = qs[4].record.id.clone();
    let mut lines = golden::planner_script(qs);
    for r in [1, 4, 9] {
        for attempt in 1..=3 {
            lines.push(flaky_line(&flaky, attempt, r));
        }
    }
    let thor = Thor::new(ScriptedBackend::from_lines("scripted", lines).unwrap(), reg.clone());
    let records: Vec<QueryRecord> = qs.iter().map(|q| q.record.clone()).collect();
    let run = run_suite(&thor, &records, &common::fixtures(&c), &reg, &common::opts(10), &ZeroClock).unwrap();
    assert_eq!(run.matrix.fluctuating(), vec![flaky.as_str()]);
    assert_eq!(reliability(&run.matrix).unwrap(), 87.5);
    let failed: Vec<u32> = run.results.iter().filter(|r| !r.success).map(|r| r.repeat).collect();
    assert_eq!(failed, vec![1, 4, 9]);
    assert!(run.results.iter().filter(|r| !r.success).all(|r| r.attempts_used == 3 && r.calls.is_empty()));
}

#[test]
fn one_repeat_is_too_few_for_reliability() {
    let (reg, c) = common::corpus();
    let run = common::golden_run("thor", &c.single[..3], 1, &reg, &c);
    assert_eq!(reliability(&run.matrix().unwrap()), Err(MetricsError::TooFewRepeats(1)));
}

#[test]
fn results_do_not_depend_on_parallelism() {
    let (reg, c) = common::corpus();
    let qs = &c.multi[..10];
    let records: Vec<QueryRecord> = qs.iter().map(|q| q.record.clone()).collect();
    let run = |parallelism| {
        let thor = Thor::new(ScriptedBackend::from_lines("scripted", golden::planner_script(qs)).unwrap(), reg.clone());
        let opts = SuiteOptions { parallelism, ..common::opts(3) };
        let r = run_suite(&thor, &records, &common::fixtures(&c), &reg, &opts, &ZeroClock).unwrap();
        serde_json::to_string(&r.results).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(one, run(3));
}

#[test]
fn a_missing_fixture_stops_the_suite() {
    let (reg, c) = common::corpus();
    let records = vec![c.single[0].record.clone()];
    let thor = Thor::new(ScriptedBackend::new("scripted"), reg.clone());
    let err = run_suite(&thor, &records, &BTreeMap::new(), &reg, &common::opts(1), &ZeroClock).err().unwrap();
    assert!(err.to_string().contains("seed.json"), "{err}");
}

#[test]
fn backend_failures_become_failing_cells() {
    let (reg, c) = common::corpus();
    let records = vec![c.single[0].record.clone()];
    let thor = Thor::new(ScriptedBackend::new("scripted"), reg.clone());
    let run = run_suite(&thor, &records, &common::fixtures(&c), &reg, &common::opts(2), &ZeroClock).unwrap();
    assert!(run.results.iter().all(|r| !r.success && r.failure.is_some()));
}

#[test]
fn run_directories_round_trip_and_report() {
    let (reg, c) = common::corpus();
    let dir = tempfile::tempdir().unwrap();
    for (kind, qs) in [("thor", &c.single[..4]), ("single", &c.single[..4])] {
        let loaded = common::golden_run(kind, qs, 2, &reg, &c);
        let path = dir.path().join(kind);
        write_run(&path, &loaded.manifest, &loaded.results).unwrap();
        let back = load_run(&path).unwrap();
        assert_eq!(back.manifest, loaded.manifest);
        assert_eq!(back.results, loaded.results);
        std::fs::write(path.join(cruda::runner::COST_FILE), golden::EXAMPLE_PRICES).unwrap();
    }
    let runs = load_runs(dir.path()).unwrap();
    assert_eq!(runs.len(), 2);
    let strict = ReportOptions { verdicts: vec![], allow_sampled: false, cost_model: None };
    assert!(build_report(&runs, &strict).is_err());
    let sampled = ReportOptions { verdicts: vec![], allow_sampled: true, cost_model: None };
    let report = build_report(&runs, &sampled).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert!(report.runs.iter().all(|r| r.reliability == Some(100.0)));
    let unpriced = ReportOptions { verdicts: vec![], allow_sampled: true, cost_model: Some(CostModel::default()) };
    assert!(build_report(&runs, &unpriced).is_err());
    assert!(load_runs(&dir.path().join("missing")).is_err());
}

#[test]
fn manifest_keeps_query_metadata() {
    let (reg, c) = common::corpus();
    let loaded = common::golden_run("multi", &c.multi[..2], 2, &reg, &c);
    let m: &RunManifest = &loaded.manifest;
    assert_eq!((m.pipeline.as_str(), m.repeats, m.queries.len()), ("multi", 2, 2));
    assert_eq!(m.queries[0].n_calls, 2);
    assert_eq!(m.queries[0].text, c.multi[0].record.text);
}
