//! Simulation event log.
//!
//! Each event serializes to one JSON object per line. Field order is fixed:
//! `seq`, `tick`, `kind`, then the kind-specific fields in the order they are
//! declared below.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::mitigator::ActionKind;
use crate::telemetry::{FaultKind, NodeId, Tick};

pub type TaskId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    /// Predictor output exceeded the warning threshold.
    Prediction,
    /// A baseline's own trigger (e.g. SM's state threshold), scored like a warning.
    Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationStatus {
    Start,
    Done,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryRoute {
    /// Restore from the last checkpoint on a node picked by the cluster.
    Checkpoint,
    /// Restore on a standby chosen by the strategy.
    Backup,
    /// Promotion of an in-sync replica.
    Replica,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionTrigger {
    Schedule,
    Warning,
    Anomaly,
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub action: ActionKind,
    pub destination: Option<NodeId>,
    pub resource_cost: f64,
    pub fault_impact: f64,
    pub score: f64,
}

/// Inputs behind a decision, logged so it can be recomputed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionDetail {
    pub trigger: DecisionTrigger,
    pub probability: f64,
    /// Cluster load behind `rate`.
    pub load: f64,
    pub rate: f64,
    pub interval: Tick,
    /// The target's own load, which prices the candidates.
    pub node_load: f64,
    /// State fed to the mitigation objective, when one was evaluated.
    pub state: Option<usize>,
    pub candidates: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventPayload {
    /// End-of-tick summary: mean cluster load, unavailable task count, and
    /// cost units charged this tick outside of decisions.
    MetricTick {
        load: f64,
        unavailable: usize,
        cost: u64,
    },
    FaultStart {
        fault: usize,
        node: NodeId,
        fault_kind: FaultKind,
        severity: f64,
        affected: Vec<TaskId>,
    },
    FaultEnd {
        fault: usize,
        node: NodeId,
        noop: bool,
    },
    CheckpointStart {
        task: TaskId,
        node: NodeId,
        snapshot: u64,
        duration: Tick,
    },
    CheckpointDone {
        task: TaskId,
        node: NodeId,
        snapshot: u64,
    },
    RecoveryStart {
        task: TaskId,
        from: NodeId,
        to: NodeId,
        duration: Tick,
        lost_work: u64,
        route: RecoveryRoute,
    },
    RecoveryDone {
        fault: usize,
        recovery_time: Tick,
    },
    Migration {
        task: TaskId,
        from: NodeId,
        to: NodeId,
        status: MigrationStatus,
    },
    Failover {
        task: TaskId,
        from: NodeId,
        to: NodeId,
        replica: bool,
    },
    Warning {
        node: NodeId,
        probability: Option<f64>,
        source: SignalSource,
    },
    AnomalyFlag {
        node: NodeId,
        from_state: usize,
        to_state: usize,
        probability: f64,
    },
    Decision {
        node: NodeId,
        action: ActionKind,
        destination: Option<NodeId>,
        applied: bool,
        cost: u64,
        detail: Option<DecisionDetail>,
    },
}

impl EventPayload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventPayload::MetricTick { .. } => "MetricTick",
            EventPayload::FaultStart { .. } => "FaultStart",
            EventPayload::FaultEnd { .. } => "FaultEnd",
            EventPayload::CheckpointStart { .. } => "CheckpointStart",
            EventPayload::CheckpointDone { .. } => "CheckpointDone",
            EventPayload::RecoveryStart { .. } => "RecoveryStart",
            EventPayload::RecoveryDone { .. } => "RecoveryDone",
            EventPayload::Migration { .. } => "Migration",
            EventPayload::Failover { .. } => "Failover",
            EventPayload::Warning { .. } => "Warning",
            EventPayload::AnomalyFlag { .. } => "AnomalyFlag",
            EventPayload::Decision { .. } => "Decision",
        }
    }
}

/// Append-only log that stamps sequence numbers.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    events: Vec<SimEvent>,
}

impl EventLog {
    pub fn push(&mut self, tick: Tick, payload: EventPayload) {
        let seq = self.events.len() as u64;
        self.events.push(SimEvent { seq, tick, payload });
    }

    pub fn into_events(self) -> Vec<SimEvent> {
        self.events
    }
}

pub fn write_events<W: Write>(events: &[SimEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
