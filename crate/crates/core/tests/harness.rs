use std::collections::BTreeMap;

use cruda_core::backend::{CostModel, Usage};
use cruda_core::dataset::{parse_dataset, DatasetError, QueryRecord};
use cruda_core::harness::{
    accuracy, compute_metrics, emit_report, fit_scaling, format_growth, format_pct, growth_percent, reliability,
    scaling_rows, Cell, HumanVerdict, MetricsError, MetricsInput, Report, ReportFormat, ReportMetadata, RunMatrix,
    RunRef, ScalingClass, ScalingError,
};
use cruda_core::schema::{builtin_registry, Category};
use proptest::prelude::*;

fn cell(q: &str, repeat: u32, pass: bool) -> Cell {
    Cell {
        query_id: q.into(),
        repeat,
        pass,
        latency_s: 1.0,
        usage: Usage { input_tokens: 1000, output_tokens: 500 },
        completions: 1,
        n_calls: 1,
    }
}

fn matrix(rows: &[Vec<bool>]) -> RunMatrix {
    let ids: Vec<String> = (0..rows.len()).map(|i| format!("q{i}")).collect();
    let repeats = rows.first().map_or(0, |r| r.len()) as u32;
    let mut m = RunMatrix::new("thor", "m", ids.clone(), repeats);
    for (q, row) in ids.iter().zip(rows) {
        for (r, &p) in row.iter().enumerate() {
            m.insert(cell(q, r as u32, p)).unwrap();
        }
    }
    m
}

fn verdict(q: &str, all: bool) -> HumanVerdict {
    HumanVerdict {
        run: RunRef { pipeline: "thor".into(), model: "m".into(), query_id: q.into(), repeat: 0 },
        function_selection: true,
        task_representation: true,
        structural_integrity: true,
        functional_integrity: true,
        instruction_containment: all,
        evaluator_id: "e1".into(),
        timestamp: "2024-05-05T00:00:00.000Z".into(),
    }
}

proptest! {
    #[test]
    fn reliability_matches_direct_scan(rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 10), 1..40)) {
        let m = matrix(&rows);
        let mixed = rows.iter().filter(|r| r.contains(&true) && r.contains(&false)).count();
        let expected = (rows.len() - mixed) as f64 * 100.0 / rows.len() as f64;
        prop_assert_eq!(reliability(&m).unwrap(), expected);
    }
}

#[test]
fn reliability_formula() {
    let mut rows = vec![vec![true; 10]; 180];
    rows.extend((0..20).map(|_| {
        let mut r = vec![true; 10];
        r[3] = false;
        r
    }));
    assert_eq!(reliability(&matrix(&rows)).unwrap(), 90.0);
}

#[test]
fn flaky_query_is_fluctuating() {
    let mut rows = vec![vec![true; 10]; 6];
    for r in [1, 4, 9] {
        rows[5][r] = false;
    }
    let m = matrix(&rows);
    assert_eq!(m.fluctuating(), ["q5"]);
}

#[test]
fn reliability_needs_two_repeats_and_no_holes() {
    let m = matrix(&[vec![true], vec![false]]);
    assert_eq!(reliability(&m), Err(MetricsError::TooFewRepeats(1)));
    let mut m = RunMatrix::new("thor", "m", vec!["a".into()], 2);
    m.insert(cell("a", 0, true)).unwrap();
    assert_eq!(reliability(&m), Err(MetricsError::Holes(vec![("a".into(), 1)])));
    assert!(matches!(m.insert(cell("a", 2, true)), Err(MetricsError::OutOfGrid(..))));
    assert!(matches!(m.insert(cell("zz", 0, true)), Err(MetricsError::OutOfGrid(..))));
}

#[test]
fn accuracy_needs_software_pass_and_all_five() {
    let m = matrix(&[vec![true, true], vec![true, true], vec![false, false]]);
    let v = vec![verdict("q0", true), verdict("q1", false), verdict("q2", true)];
    let a = accuracy(&m, &v, false).unwrap();
    assert_eq!(a.correct, ["q0"]);
    assert_eq!(a.total, 3);

    // A later verdict supersedes an earlier one.
    let v2 = vec![verdict("q1", false), verdict("q1", true), verdict("q0", true)];
    assert_eq!(accuracy(&m, &v2, false).unwrap().correct, ["q0", "q1"]);

    assert_eq!(accuracy(&m, &[verdict("q0", true)], false), Err(MetricsError::MissingVerdicts(vec!["q1".into()])));
    let sampled = accuracy(&m, &[verdict("q0", true)], true).unwrap();
    assert_eq!((sampled.graded, sampled.percent()), (2, 50.0));
}

#[test]
fn all_fail_suite_is_reliable_but_never_accurate() {
    let m = matrix(&vec![vec![false; 10]; 12]);
    assert_eq!(reliability(&m).unwrap(), 100.0);
    assert_eq!(accuracy(&m, &[], false).unwrap().percent(), 0.0);
}

fn categories(m: &RunMatrix, c: Category) -> BTreeMap<String, Category> {
    m.query_ids.iter().map(|q| (q.clone(), c)).collect()
}

#[test]
fn metrics_report() {
    let m = matrix(&[vec![true, true], vec![true, false]]);
    let cats = categories(&m, Category::Read);
    let verdicts = vec![verdict("q0", true), verdict("q1", true)];
    let input = MetricsInput { categories: &cats, verdicts: &verdicts, allow_sampled: false, metadata: ReportMetadata::default() };
    let cost = CostModel::default().with_price("m", 1.0, 2.0);
    let r = compute_metrics(&m, &input, &cost).unwrap();
    assert_eq!(r.accuracy, Some(100.0));
    assert_eq!(r.reliability, Some(50.0));
    assert_eq!(r.mean_latency_s, 1.0);
    assert!((r.cost_per_1000 - 2.0).abs() < 1e-12);
    assert_eq!(r.per_category[&Category::Read], Some(100.0));
    assert_eq!(r.per_category[&Category::Delete], None);
    assert_eq!(r.fluctuating, ["q1"]);

    let unpriced = CostModel::default();
    assert!(matches!(compute_metrics(&m, &input, &unpriced), Err(MetricsError::Cost(_))));

    let report = Report { runs: vec![r], scaling: vec![] };
    let md = emit_report(&report, ReportFormat::Markdown);
    assert!(md.contains("| thor | m | 2 | 100.0% | 50.0% | 1.00 | 2.00 |"), "{md}");
    assert!(md.contains("| thor | m | n/a | 100.0% | n/a | n/a | n/a |"), "{md}");
    let json = emit_report(&report, ReportFormat::Json);
    assert_eq!(json, emit_report(&report.clone(), ReportFormat::Json));
    let back: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn scaling_fit_two_points_is_exact() {
    let f = fit_scaling(&[(1.0, 2.29), (2.0, 3.55)]).unwrap();
    assert!((f.alpha - (3.55f64 / 2.29).log2()).abs() < 1e-12);
    assert_eq!(f.class, ScalingClass::Sublinear);
    let f = fit_scaling(&[(1.0, 15.3), (2.0, 36.2)]).unwrap();
    assert_eq!(f.class, ScalingClass::Superlinear);
    let flat = fit_scaling(&[(1.0, 2.29), (2.0, 2.29)]).unwrap();
    assert_eq!((flat.alpha, flat.class), (0.0, ScalingClass::Sublinear));
}

#[test]
fn scaling_fit_least_squares() {
    // Points on an exact power law recover its exponent.
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(0.7))).collect();
    let f = fit_scaling(&pts).unwrap();
    assert!((f.alpha - 0.7).abs() < 1e-12);
    assert_eq!(fit_scaling(&[(1.0, 1.0)]), Err(ScalingError::DegenerateInput));
    assert_eq!(fit_scaling(&[(1.0, 1.0), (1.0, 2.0)]), Err(ScalingError::DegenerateInput));
    assert_eq!(fit_scaling(&[(1.0, 0.0), (2.0, 2.0)]), Err(ScalingError::DegenerateInput));
}

#[test]
fn growth_rendering() {
    assert_eq!(format_growth(growth_percent(2.29, 3.55)), "+55%");
    assert_eq!(format_growth(growth_percent(2.92, 6.83)), "+134%");
    assert_eq!(format_growth(-3.4), "-3%");
    assert_eq!(format_pct(128.0 * 100.0 / 142.0, 1), "90.1%");
}

#[test]
fn scaling_rows_pair_baselines() {
    let mk = |p: &str, n: usize, lat: f64| {
        let mut m = RunMatrix::new(p, "m", vec!["a".into()], 1);
        let mut c = cell("a", 0, true);
        c.n_calls = n;
        c.latency_s = lat;
        m.insert(c).unwrap();
        m
    };
    let rows = scaling_rows(&[mk("thor", 1, 1.1), mk("thor", 2, 1.2), mk("single", 1, 1.1), mk("multi", 2, 4.2)]);
    assert_eq!(rows.len(), 2);
    let base = rows.iter().find(|r| r.system == "baseline").unwrap();
    assert_eq!(base.fit.class, ScalingClass::Superlinear);
    let thor = rows.iter().find(|r| r.system == "thor").unwrap();
    assert_eq!(format_growth(thor.growth_pct), "+9%");
    let md = emit_report(&Report { runs: vec![], scaling: rows }, ReportFormat::Markdown);
    assert!(md.contains("| thor | m | 1.10 | 1.20 | +9% |"), "{md}");
}

fn record(id: &str, n: usize, gold: Vec<serde_json::Value>, category: &str) -> String {
    let names: Vec<&str> = gold.iter().map(|g| g["function_name"].as_str().unwrap()).collect();
    serde_json::json!({
        "id": id, "text": "t", "category": category, "n_calls": n,
        "gold_functions": names, "gold_calls": gold, "fixture": "seed.json"
    })
    .to_string()
}

fn delete_company(id: u64) -> serde_json::Value {
    serde_json::json!({"function_name": "crm_v3_objects_companies_archive_delete", "method": "DELETE",
        "path": format!("/objects/company/{id}"), "body": {}})
}

#[test]
fn dataset_checks() {
    let reg = builtin_registry();
    let ok = record("s1", 1, vec![delete_company(5)], "DELETE");
    let recs: Vec<QueryRecord> = parse_dataset(&ok, &reg).unwrap();
    assert_eq!(recs.len(), 1);

    let short = record("m1", 2, vec![delete_company(5)], "DELETE");
    let errs = parse_dataset(&short, &reg).unwrap_err().0;
    assert!(matches!(&errs[0], DatasetError::Consistency { line: 1, message, .. } if message.contains("n_calls is 2")));

    let wrong_cat = record("s2", 1, vec![delete_company(5)], "CREATE");
    assert!(parse_dataset(&wrong_cat, &reg).is_err());

    let text = format!("{ok}\n\nnot json\n{ok}\n");
    let errs = parse_dataset(&text, &reg).unwrap_err().0;
    assert!(matches!(errs[0], DatasetError::Parse { line: 3, .. }));
    assert_eq!(errs[1], DatasetError::DuplicateId { line: 4, id: "s1".into() });
}
