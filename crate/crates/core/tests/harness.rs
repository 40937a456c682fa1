mod common;

use std::path::Path;

use ftsim_core::config::ScenarioConfig;
use ftsim_core::harness::{
    emit_reports, mark_incomplete, render_reports, run_comparison, run_experiment_with, stat,
    ComparisonReport, RunRow, SeriesPoint, SUMMARY_FILE,
};
use ftsim_core::predictor::PredictorWeights;
use ftsim_core::Error;

fn quick_config(strategies: &[&str], seeds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.telemetry.ticks = 1500;
    cfg.telemetry.fault_rate = 0.02;
    cfg.experiment.seeds = (1..=seeds).collect();
    cfg.experiment.strategies = strategies.iter().map(|s| s.to_string()).collect();
    cfg.experiment.fault_levels = vec![10.0, 30.0];
    cfg
}

fn weights() -> PredictorWeights {
    PredictorWeights::logistic(vec![4.0; 6], -5.0)
}

fn row(
    strategy: &str,
    seed: u64,
    mean: f64,
    downtime: u64,
    overhead: u64,
    tp: u64,
    fp: u64,
) -> RunRow {
    let (tn, fn_) = (1000 - tp - fp - 4, 4);
    RunRow {
        strategy: strategy.into(),
        seed,
        faults: 3,
        censored: 0,
        mean_recovery: mean,
        max_recovery: (mean * 2.0) as u64,
        downtime,
        overhead,
        accuracy: (tp + tn) as f64 / 1000.0,
        tp,
        fp,
        tn,
        fn_,
    }
}

fn two_row_report() -> ComparisonReport {
    ComparisonReport::from_rows(
        vec!["CP".into(), "Adaptive".into()],
        vec![
            row("CP", 1, 12.5, 40, 500, 0, 50),
            row("Adaptive", 1, 7.25, 15, 320, 6, 2),
        ],
        vec![
            SeriesPoint {
                fault_level: 10.0,
                strategy: "CP".into(),
                mean_recovery: 12.5,
                accuracy: 0.946,
            },
            SeriesPoint {
                fault_level: 10.0,
                strategy: "Adaptive".into(),
                mean_recovery: 7.25,
                accuracy: 0.998,
            },
        ],
    )
}

#[test]
fn one_strategy_one_seed_gives_one_row() {
    let report = run_comparison(&quick_config(&["CP"], 1), None).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.aggregates.len(), 1);
    assert_eq!(report.aggregates[0].runs, 1);
}

#[test]
fn aggregates_recompute_from_rows() {
    let cfg = quick_config(&["CP", "RP", "SM", "AD", "Adaptive"], 10);
    let report = run_comparison(&cfg, Some(&weights())).unwrap();
    assert_eq!(report.rows.len(), 50);
    for agg in &report.aggregates {
        let rows: Vec<&RunRow> = report
            .rows
            .iter()
            .filter(|r| r.strategy == agg.strategy)
            .collect();
        assert_eq!(rows.len(), 10);
        let pick = |f: fn(&RunRow) -> f64| stat(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        assert_eq!(agg.mean_recovery, pick(|r| r.mean_recovery));
        assert_eq!(agg.downtime, pick(|r| r.downtime as f64));
        assert_eq!(agg.overhead, pick(|r| r.overhead as f64));
        assert_eq!(agg.accuracy, pick(|r| r.accuracy));
    }
    let cost = report.cost_row();
    assert_eq!(
        cost.iter().map(|c| c.0).collect::<Vec<_>>(),
        ["CP", "RP", "SM", "AD", "Ours"]
    );
    assert!(cost.iter().all(|c| c.1.is_some()));
}

#[test]
fn stat_uses_sample_deviation() {
    let s = stat(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(s.mean, 5.0);
    assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    assert_eq!(stat(&[3.0]).std, 0.0);
}

#[test]
fn sweep_adds_one_point_per_level_and_strategy() {
    let cfg = quick_config(&["CP", "AD"], 2);
    let report = run_experiment_with(&cfg, Some(&weights())).unwrap();
    assert_eq!(report.series.len(), 4);
    let again = run_experiment_with(&cfg, Some(&weights())).unwrap();
    assert_eq!(
        render_reports(&report).unwrap(),
        render_reports(&again).unwrap()
    );
}

#[test]
fn empty_report_renders_headers_only() {
    let report = ComparisonReport::from_rows(vec![], vec![], vec![]);
    for (name, bytes) in render_reports(&report).unwrap() {
        if name == SUMMARY_FILE {
            continue;
        }
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}: {text:?}");
    }
}

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

#[test]
fn two_row_report_matches_golden_files() {
    for (name, bytes) in render_reports(&two_row_report()).unwrap() {
        let want = std::fs::read(golden_dir().join(name)).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            String::from_utf8(want).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn re_emitting_gives_identical_bytes() {
    let report = two_row_report();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let names = emit_reports(&report, a.path()).unwrap();
    assert_eq!(names, emit_reports(&report, b.path()).unwrap());
    emit_reports(&report, a.path()).unwrap();
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn failed_runs_mark_the_directory_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&two_row_report(), dir.path()).unwrap();
    let err = Error::Input("boom".into());
    mark_incomplete(dir.path(), &err).unwrap();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["complete"], false);
    assert!(summary["error"].as_str().unwrap().contains("boom"));
}

#[test]
fn failing_run_names_strategy_and_seed() {
    let mut cfg = quick_config(&["Adaptive"], 1);
    cfg.experiment.fault_levels.clear();
    let err = run_comparison(&cfg, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("Adaptive") && msg.contains('1'), "{msg}");
}

#[test]
fn unwritable_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    let err = emit_reports(&two_row_report(), file.join("sub")).unwrap_err();
    assert_eq!(err.code(), "io");
}
