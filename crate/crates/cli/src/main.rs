use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftsim_core::config::{parse_scenario, ScenarioConfig};
use ftsim_core::events::write_events;
use ftsim_core::harness::{
    emit_reports, mark_incomplete, run_experiment, run_experiment_with, train_predictor,
};
use ftsim_core::predictor::{read_weights, write_weights, PredictorWeights};
use ftsim_core::sim::run_simulation;
use ftsim_core::strategies::StrategyKind;
use ftsim_core::telemetry::{generate_trace, write_trace};
use ftsim_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ftsim",
    version,
    about = "Cluster fault simulator and fault-tolerance strategy comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy on one seed and write its event log and metrics.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Predictor weights from `train`; trained on the fly if omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every configured strategy on every seed and emit the report files.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Evaluate on seeds 1..=N instead of the scenario's list.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
        /// Comma-separated strategy names, overriding the scenario.
        #[arg(long, value_delimiter = ',')]
        strategy: Option<Vec<String>>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Output directory, overriding the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the predictor on the training seed's trace.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training seed, overriding the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "predictor.txt")]
        out: PathBuf,
    },
    /// Write the telemetry trace of one seed.
    GenTrace {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "trace.txt")]
        out: PathBuf,
    },
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => parse_scenario(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_weights(path: &Path) -> Result<PredictorWeights> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_weights(BufReader::new(f))
}

fn weights_for(
    cfg: &ScenarioConfig,
    path: Option<&Path>,
    needed: bool,
) -> Result<Option<PredictorWeights>> {
    match path {
        Some(p) => load_weights(p).map(Some),
        None if needed => Ok(Some(train_predictor(cfg)?.weights)),
        None => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTrace { common, seed, out } => {
            let cfg = load_scenario(common.scenario.as_deref())?;
            let trace = generate_trace(&cfg.telemetry, seed)?;
            let mut w = create(&out)?;
            write_trace(&trace, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_err(&out, e))?;
            if !common.quiet {
                println!(
                    "trace seed={seed} nodes={} ticks={} faults={} -> {}",
                    trace.node_count(),
                    trace.ticks(),
                    trace.faults.len(),
                    out.display()
                );
            }
        }
        Command::Train { common, seed, out } => {
            let mut cfg = load_scenario(common.scenario.as_deref())?;
            if let Some(s) = seed {
                cfg.experiment.train_seed = s;
            }
            let outcome = train_predictor(&cfg)?;
            let mut w = create(&out)?;
            write_weights(&outcome.weights, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_err(&out, e))?;
            if !common.quiet {
                let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
                let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
                println!(
                    "trained seed={} epochs={} loss {first:.6} -> {last:.6} -> {}",
                    cfg.experiment.train_seed,
                    cfg.predictor.epochs,
                    out.display()
                );
            }
        }
        Command::Run {
            common,
            strategy,
            seed,
            weights,
            out,
        } => {
            let cfg = load_scenario(common.scenario.as_deref())?;
            let kind = StrategyKind::from_name(&strategy, &cfg.strategies)?;
            let weights = weights_for(&cfg, weights.as_deref(), kind.needs_predictor())?;
            let report = run_simulation(&cfg, &kind, seed, weights.as_ref())?;
            std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let events_path = out.join(format!("events-{}-{seed}.jsonl", kind.name()));
            let mut w = create(&events_path)?;
            write_events(&report.events, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_err(&events_path, e))?;
            let metrics_path = out.join(format!("metrics-{}-{seed}.json", kind.name()));
            let mut body = serde_json::to_vec_pretty(&report.metrics).expect("metrics serialize");
            body.push(b'\n');
            std::fs::write(&metrics_path, body).map_err(|e| io_err(&metrics_path, e))?;
            if !common.quiet {
                let m = &report.metrics;
                println!(
                    "{} seed={seed} faults={} mean_recovery={:.2} downtime={} overhead={} accuracy={:.4}",
                    kind.name(),
                    m.recovery_times.len(),
                    m.mean_recovery(),
                    m.total_downtime,
                    m.overhead_cost,
                    m.accuracy
                );
            }
        }
        Command::Compare {
            common,
            seeds,
            strategy,
            weights,
            out,
        } => {
            let mut cfg = load_scenario(common.scenario.as_deref())?;
            if let Some(n) = seeds {
                cfg.experiment.seeds = (1..=n).collect();
            }
            if let Some(s) = strategy {
                cfg.experiment.strategies = s;
            }
            if let Some(o) = out {
                cfg.experiment.output_dir = o.display().to_string();
            }
            cfg.validate()?;
            let dir = PathBuf::from(&cfg.experiment.output_dir);
            let result = match weights {
                Some(p) => load_weights(&p).and_then(|w| run_experiment_with(&cfg, Some(&w))),
                None => run_experiment(&cfg),
            };
            let report = match result {
                Ok(r) => r,
                Err(e) => {
                    mark_incomplete(&dir, &e)?;
                    return Err(e);
                }
            };
            emit_reports(&report, &dir)?;
            let scenario_path = dir.join("scenario.toml");
            std::fs::write(&scenario_path, cfg.dump()).map_err(|e| io_err(&scenario_path, e))?;
            if !common.quiet {
                println!(
                    "{:<10} {:>6} {:>14} {:>10} {:>10} {:>9}",
                    "strategy", "runs", "mean_recovery", "downtime", "overhead", "accuracy"
                );
                for a in &report.aggregates {
                    println!(
                        "{:<10} {:>6} {:>14.2} {:>10.1} {:>10.1} {:>9.4}",
                        a.strategy,
                        a.runs,
                        a.mean_recovery.mean,
                        a.downtime.mean,
                        a.overhead.mean,
                        a.accuracy.mean
                    );
                }
                println!("reports -> {}", dir.display());
            }
        }
    }
    Ok(())
}

fn error_line(code: &str, message: impl std::fmt::Display) {
    let line = serde_json::json!({ "error": code, "message": message.to_string() });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // --help and --version are not errors.
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            let head = text.split("\n\nUsage:").next().unwrap_or_default();
            let message = head
                .trim_start_matches("error: ")
                .split_whitespace()
                .collect::<Vec<_>>();
            error_line("usage", message.join(" "));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.code(), &e);
            ExitCode::FAILURE
        }
    }
}
