//! Experiment protocol and report files.
//!
//! The predictor is trained once on the training seed's trace. Every
//! `(strategy, seed)` pair then runs on the evaluation traces, first at the
//! scenario's own fault rate and then once per point of the fault-count
//! sweep.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ScenarioConfig, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::predictor::{train_dataset, Dataset, PredictorWeights, TrainOutcome};
use crate::sim::run_on_trace;
use crate::strategies::StrategyKind;
use crate::telemetry::{generate_trace, label_windows, TelemetryTrace};

/// Column order of the cost table; the adaptive method is reported as "Ours".
pub const COST_COLUMNS: [(&str, &str); 5] = [
    ("CP", "CP"),
    ("RP", "RP"),
    ("SM", "SM"),
    ("AD", "AD"),
    ("Adaptive", "Ours"),
];

/// Labeled windows of every node of the training trace.
pub fn training_set(cfg: &ScenarioConfig, trace: &TelemetryTrace) -> Result<Dataset> {
    let mut windows = Vec::new();
    for node in 0..trace.node_count() {
        windows.extend(label_windows(trace, node, cfg.predictor.horizon)?);
    }
    Dataset::from_windows(&windows)
}

pub fn train_predictor(cfg: &ScenarioConfig) -> Result<TrainOutcome> {
    let seed = cfg.experiment.train_seed;
    let trace = generate_trace(&cfg.telemetry, seed)?;
    train_dataset(&training_set(cfg, &trace)?, &cfg.predictor, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub strategy: String,
    pub seed: u64,
    /// Faults that affected at least one task.
    pub faults: usize,
    pub censored: usize,
    pub mean_recovery: f64,
    pub max_recovery: u64,
    pub downtime: u64,
    pub overhead: u64,
    pub accuracy: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl RunRow {
    pub fn from_metrics(strategy: &str, seed: u64, m: &RunMetrics) -> Self {
        Self {
            strategy: strategy.to_string(),
            seed,
            faults: m.recovery_times.len(),
            censored: m.censored,
            mean_recovery: m.mean_recovery(),
            max_recovery: m.recovery_times.iter().copied().max().unwrap_or(0),
            downtime: m.total_downtime,
            overhead: m.overhead_cost,
            accuracy: m.accuracy,
            tp: m.confusion.tp,
            fp: m.confusion.fp,
            tn: m.confusion.tn,
            fn_: m.confusion.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn stat(values: &[f64]) -> Stat {
    if values.is_empty() {
        return Stat {
            mean: 0.0,
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Stat { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub strategy: String,
    pub runs: usize,
    pub mean_recovery: Stat,
    pub downtime: Stat,
    pub overhead: Stat,
    pub accuracy: Stat,
}

pub fn aggregate(rows: &[RunRow], strategies: &[String]) -> Vec<Aggregate> {
    strategies
        .iter()
        .map(|s| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| &r.strategy == s).collect();
            let col = |f: fn(&RunRow) -> f64| stat(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            Aggregate {
                strategy: s.clone(),
                runs: mine.len(),
                mean_recovery: col(|r| r.mean_recovery),
                downtime: col(|r| r.downtime as f64),
                overhead: col(|r| r.overhead as f64),
                accuracy: col(|r| r.accuracy),
            }
        })
        .collect()
}

/// One point of the fault-count sweep for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub fault_level: f64,
    pub strategy: String,
    pub mean_recovery: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub strategies: Vec<String>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
    pub series: Vec<SeriesPoint>,
}

impl ComparisonReport {
    pub fn from_rows(strategies: Vec<String>, rows: Vec<RunRow>, series: Vec<SeriesPoint>) -> Self {
        let aggregates = aggregate(&rows, &strategies);
        Self {
            strategies,
            rows,
            aggregates,
            series,
        }
    }

    pub fn aggregate_for(&self, strategy: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.strategy == strategy)
    }

    /// Mean overhead per cost-table column; `None` where a strategy did not run.
    pub fn cost_row(&self) -> Vec<(&'static str, Option<f64>)> {
        COST_COLUMNS
            .iter()
            .map(|(name, label)| (*label, self.aggregate_for(name).map(|a| a.overhead.mean)))
            .collect()
    }
}

fn run_grid(
    cfg: &ScenarioConfig,
    kinds: &[StrategyKind],
    weights: Option<&PredictorWeights>,
) -> Result<Vec<RunRow>> {
    let traces = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| generate_trace(&cfg.telemetry, seed))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&StrategyKind, &TelemetryTrace)> = kinds
        .iter()
        .flat_map(|k| traces.iter().map(move |t| (k, t)))
        .collect();
    pairs
        .par_iter()
        .map(|(kind, trace)| {
            run_on_trace(cfg, kind, trace, weights)
                .map(|r| RunRow::from_metrics(kind.name(), trace.seed, &r.metrics))
                .map_err(|e| Error::Run {
                    strategy: kind.name().to_string(),
                    seed: trace.seed,
                    source: Box::new(e),
                })
        })
        .collect()
}

pub fn strategy_kinds(cfg: &ScenarioConfig) -> Result<Vec<StrategyKind>> {
    cfg.experiment
        .strategies
        .iter()
        .map(|s| StrategyKind::from_name(s, &cfg.strategies))
        .collect()
}

/// Runs the grid at the scenario's own fault rate only.
pub fn run_comparison(
    cfg: &ScenarioConfig,
    weights: Option<&PredictorWeights>,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let kinds = strategy_kinds(cfg)?;
    let rows = run_grid(cfg, &kinds, weights)?;
    Ok(ComparisonReport::from_rows(
        cfg.experiment.strategies.clone(),
        rows,
        Vec::new(),
    ))
}

/// Full protocol: train, compare, then sweep the fault count.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let kinds = strategy_kinds(cfg)?;
    let weights = if kinds.iter().any(StrategyKind::needs_predictor) {
        Some(train_predictor(cfg)?.weights)
    } else {
        None
    };
    run_experiment_with(cfg, weights.as_ref())
}

pub fn run_experiment_with(
    cfg: &ScenarioConfig,
    weights: Option<&PredictorWeights>,
) -> Result<ComparisonReport> {
    let mut report = run_comparison(cfg, weights)?;
    let kinds = strategy_kinds(cfg)?;
    for &level in &cfg.experiment.fault_levels {
        let mut swept = cfg.clone();
        swept.telemetry.fault_rate = level / cfg.telemetry.ticks as f64;
        let rows = run_grid(&swept, &kinds, weights)?;
        for agg in aggregate(&rows, &cfg.experiment.strategies) {
            report.series.push(SeriesPoint {
                fault_level: level,
                strategy: agg.strategy,
                mean_recovery: agg.mean_recovery.mean,
                accuracy: agg.accuracy.mean,
            });
        }
    }
    Ok(report)
}

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COST_FILE: &str = "cost_table.csv";
pub const RECOVERY_SERIES_FILE: &str = "recovery_series.csv";
pub const ACCURACY_SERIES_FILE: &str = "accuracy_series.csv";

#[derive(Serialize)]
struct Summary<'a> {
    format_version: u32,
    complete: bool,
    strategies: &'a [String],
    aggregates: &'a [Aggregate],
    cost_row: Vec<CostCell>,
}

#[derive(Serialize)]
struct CostCell {
    column: &'static str,
    overhead: Option<f64>,
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Input(format!("csv: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::Input(format!("csv: {}", e.error())))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Renders every report file as `(name, bytes)`, in a fixed order.
pub fn render_reports(report: &ComparisonReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let runs = csv_bytes(|w| {
        w.write_record([
            "strategy",
            "seed",
            "faults",
            "censored",
            "mean_recovery",
            "max_recovery",
            "downtime",
            "overhead",
            "accuracy",
            "tp",
            "fp",
            "tn",
            "fn",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.strategy.clone(),
                r.seed.to_string(),
                r.faults.to_string(),
                r.censored.to_string(),
                num(r.mean_recovery),
                r.max_recovery.to_string(),
                r.downtime.to_string(),
                r.overhead.to_string(),
                num(r.accuracy),
                r.tp.to_string(),
                r.fp.to_string(),
                r.tn.to_string(),
                r.fn_.to_string(),
            ])?;
        }
        Ok(())
    })?;

    let cost_row = report.cost_row();
    let cost = csv_bytes(|w| {
        w.write_record(cost_row.iter().map(|(label, _)| *label))?;
        if !report.rows.is_empty() {
            w.write_record(
                cost_row
                    .iter()
                    .map(|(_, v)| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.1}"))),
            )?;
        }
        Ok(())
    })?;

    let mut levels: Vec<f64> = Vec::new();
    for p in &report.series {
        if !levels.contains(&p.fault_level) {
            levels.push(p.fault_level);
        }
    }
    let series = |metric: fn(&SeriesPoint) -> f64| {
        csv_bytes(|w| {
            let mut header = vec!["fault_level".to_string()];
            header.extend(report.strategies.iter().cloned());
            w.write_record(&header)?;
            for &level in &levels {
                let mut rec = vec![num(level)];
                for s in &report.strategies {
                    let v = report
                        .series
                        .iter()
                        .find(|p| p.fault_level == level && &p.strategy == s)
                        .map_or_else(|| "NA".to_string(), |p| num(metric(p)));
                    rec.push(v);
                }
                w.write_record(&rec)?;
            }
            Ok(())
        })
    };
    let recovery = series(|p| p.mean_recovery)?;
    let accuracy = series(|p| p.accuracy)?;

    let summary = Summary {
        format_version: FORMAT_VERSION,
        complete: true,
        strategies: &report.strategies,
        aggregates: &report.aggregates,
        cost_row: cost_row
            .iter()
            .map(|(column, overhead)| CostCell {
                column,
                overhead: *overhead,
            })
            .collect(),
    };
    let mut summary = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    summary.push(b'\n');

    Ok(vec![
        (RUNS_FILE, runs),
        (SUMMARY_FILE, summary),
        (COST_FILE, cost),
        (RECOVERY_SERIES_FILE, recovery),
        (ACCURACY_SERIES_FILE, accuracy),
    ])
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn emit_reports(report: &ComparisonReport, dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in render_reports(report)? {
        write_file(&dir.join(name), &bytes)?;
        written.push(name.to_string());
    }
    Ok(written)
}

/// Marks `dir` as holding an aborted experiment.
pub fn mark_incomplete(dir: impl AsRef<Path>, error: &Error) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let body = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "complete": false,
        "error": error.to_string(),
    });
    let mut bytes = serde_json::to_vec_pretty(&body).expect("json");
    bytes.push(b'\n');
    write_file(&dir.join(SUMMARY_FILE), &bytes)
}
