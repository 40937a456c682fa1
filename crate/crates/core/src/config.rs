//! Scenario files: TOML with one section per subsystem. Every field has a
//! default, so a file only needs the values it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyConfig;
use crate::error::{Error, Result};
use crate::mitigator::MitigatorConfig;
use crate::predictor::PredictorConfig;
use crate::scheduler::SchedulerConfig;
use crate::telemetry::{TelemetryConfig, Tick};

pub const FORMAT_VERSION: u32 = 1;

/// Cluster mechanics. Durations are in ticks, costs in integer cost units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Tasks start one per node on nodes `0..tasks`; the rest are standby.
    pub tasks: usize,
    /// The first `warm_backups` standby nodes keep the latest checkpoint preloaded.
    pub warm_backups: usize,
    pub save_ticks: Tick,
    pub restore_ticks: Tick,
    pub warm_restore_ticks: Tick,
    pub migrate_ticks: Tick,
    /// Promotion of an in-sync replica.
    pub failover_ticks: Tick,
    pub restart_ticks: Tick,
    /// Work is a sequence of jobs this many progress units long. A finished
    /// job's output is durable, so a rollback never crosses a job boundary.
    pub job_ticks: u64,
    pub repair_ticks: Tick,
    /// How long a throttled node absorbs resource overloads.
    pub throttle_ticks: Tick,
    pub replica_sync_ticks: Tick,
    /// One cost unit per this many replica-ticks of upkeep.
    pub replica_upkeep_period: u64,
    /// One cost unit per this many predictor evaluations.
    pub predictions_per_cost_unit: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            tasks: 4,
            warm_backups: 2,
            save_ticks: 2,
            restore_ticks: 3,
            warm_restore_ticks: 1,
            migrate_ticks: 2,
            failover_ticks: 1,
            restart_ticks: 5,
            job_ticks: 100,
            repair_ticks: 40,
            throttle_ticks: 10,
            replica_sync_ticks: 3,
            replica_upkeep_period: 10,
            predictions_per_cost_unit: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Fixed checkpoint interval of the CP baseline.
    pub cp_interval: Tick,
    /// Replicas per task for the RP baseline.
    pub rp_replicas: usize,
    /// SM migrates when a node's health state index reaches this value.
    pub sm_threshold: usize,
    /// Warning threshold of the AD baseline.
    pub ad_threshold: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            cp_interval: 20,
            rp_replicas: 2,
            sm_threshold: 2,
            ad_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Evaluation seeds.
    pub seeds: Vec<u64>,
    /// Seed of the predictor's training trace; must not be an evaluation seed.
    pub train_seed: u64,
    pub strategies: Vec<String>,
    /// Expected faults per run for each point of the fault-count sweep.
    pub fault_levels: Vec<f64>,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            train_seed: 1000,
            strategies: ["CP", "RP", "SM", "AD", "Adaptive"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            fault_levels: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    pub cluster: ClusterConfig,
    pub telemetry: TelemetryConfig,
    pub predictor: PredictorConfig,
    pub scheduler: SchedulerConfig,
    pub anomaly: AnomalyConfig,
    pub mitigator: MitigatorConfig,
    pub strategies: StrategyParams,
    pub experiment: ExperimentConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            cluster: ClusterConfig::default(),
            telemetry: TelemetryConfig::default(),
            predictor: PredictorConfig::default(),
            scheduler: SchedulerConfig::default(),
            anomaly: AnomalyConfig::default(),
            mitigator: MitigatorConfig::default(),
            strategies: StrategyParams::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn nodes(&self) -> usize {
        self.telemetry.nodes
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(
                "format_version",
                format!("must be {FORMAT_VERSION}"),
                self.format_version,
            ));
        }
        self.telemetry.validate()?;
        self.predictor.validate()?;
        self.scheduler.validate()?;
        self.anomaly.validate()?;
        self.mitigator.validate(self.anomaly.state_count)?;
        let n = self.telemetry.indicator_count();
        if self.anomaly.health_weights.len() != n {
            return Err(Error::config(
                "anomaly.health_weights",
                "length must equal the indicator count",
                self.anomaly.health_weights.len(),
            ));
        }
        let c = &self.cluster;
        if c.tasks < 1 || c.tasks > self.nodes() {
            return Err(Error::config(
                "cluster.tasks",
                format!("must be in [1, nodes={}]", self.nodes()),
                c.tasks,
            ));
        }
        for (field, v) in [
            ("cluster.save_ticks", c.save_ticks),
            ("cluster.restore_ticks", c.restore_ticks),
            ("cluster.warm_restore_ticks", c.warm_restore_ticks),
            ("cluster.migrate_ticks", c.migrate_ticks),
            ("cluster.failover_ticks", c.failover_ticks),
            ("cluster.restart_ticks", c.restart_ticks),
            ("cluster.job_ticks", c.job_ticks),
            ("cluster.repair_ticks", c.repair_ticks),
            ("cluster.replica_upkeep_period", c.replica_upkeep_period),
            (
                "cluster.predictions_per_cost_unit",
                c.predictions_per_cost_unit,
            ),
        ] {
            if v < 1 {
                return Err(Error::config(field, "must be >= 1", v));
            }
        }
        let s = &self.strategies;
        if s.cp_interval < 1 {
            return Err(Error::config(
                "strategies.cp_interval",
                "must be >= 1",
                s.cp_interval,
            ));
        }
        if s.sm_threshold >= self.anomaly.state_count {
            return Err(Error::config(
                "strategies.sm_threshold",
                "must be a valid state index",
                s.sm_threshold,
            ));
        }
        if !(s.ad_threshold > 0.0 && s.ad_threshold < 1.0) {
            return Err(Error::config(
                "strategies.ad_threshold",
                "must be in (0,1)",
                s.ad_threshold,
            ));
        }
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(Error::config("experiment.seeds", "must be nonempty", "[]"));
        }
        if e.seeds.contains(&e.train_seed) {
            return Err(Error::config(
                "experiment.train_seed",
                "must differ from every evaluation seed",
                e.train_seed,
            ));
        }
        if e.strategies.is_empty() {
            return Err(Error::config(
                "experiment.strategies",
                "must be nonempty",
                "[]",
            ));
        }
        for name in &e.strategies {
            crate::strategies::StrategyKind::from_name(name, s)?;
        }
        if e.fault_levels.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::config(
                "experiment.fault_levels",
                "must be finite and >= 0",
                format!("{:?}", e.fault_levels),
            ));
        }
        Ok(())
    }

    /// Normalized dump with every effective value.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::parse("scenario", e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text)
}
