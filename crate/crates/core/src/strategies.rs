//! The five fault-tolerance strategies behind one interface.
//!
//! A strategy sees an [`Observation`] each tick and answers with actions plus
//! the signals it raised. The simulator applies the actions and logs
//! everything.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::anomaly::{
    discretize_state, is_anomalous, transition_prob, AnomalyConfig, DiscreteState,
};
use crate::config::{ClusterConfig, ScenarioConfig, StrategyParams};
use crate::error::{Error, Result};
use crate::events::{DecisionDetail, DecisionTrigger, ScoredCandidate, SignalSource, TaskId};
use crate::mitigator::{
    select_action_scored, should_failover, Action, ActionKind, BackupResource, MitigatorConfig,
    TransitionModel,
};
use crate::predictor::{is_warning, predict_fault, FaultProbability, PredictorWeights};
use crate::scheduler::{checkpoint_rate, rate_to_interval, SchedulerConfig};
use crate::telemetry::{MetricVector, NodeId, SystemLoad, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeStatus {
    Up,
    /// Restarting; hosts nothing new until it comes back.
    Recovering,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeView {
    pub id: NodeId,
    pub status: NodeStatus,
    /// Tasks placed on the node, whatever they are doing.
    pub tasks: usize,
    /// Tasks running normally, with no save, migration or restore in flight.
    pub idle_tasks: usize,
    /// Tasks lost with the node and not yet being restored.
    pub lost_tasks: usize,
    /// Ticks since the oldest checkpoint start among idle tasks.
    pub since_checkpoint: Option<Tick>,
    pub throttled: bool,
    pub warm: bool,
    /// An active fault is keeping tasks on this node unavailable.
    pub faulted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskView {
    pub id: TaskId,
    pub host: NodeId,
    pub lost: bool,
    /// `(node, ready)` for each replica.
    pub replicas: Vec<(NodeId, bool)>,
}

/// A finished action, reported back to the strategy on the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOutcome {
    pub target: NodeId,
    pub kind: ActionKind,
    /// Recovery the cluster started on its own after a loss.
    pub reactive: bool,
    /// Health state of the task's node when the action completed.
    pub to_state: DiscreteState,
}

#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub tick: Tick,
    pub metrics: Vec<&'a MetricVector>,
    pub states: Vec<DiscreteState>,
    pub loads: Vec<SystemLoad>,
    /// Mean of the per-node loads.
    pub load: SystemLoad,
    pub nodes: Vec<NodeView>,
    pub tasks: Vec<TaskView>,
    pub outcomes: Vec<ActionOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedAction {
    pub action: Action,
    pub detail: Option<DecisionDetail>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub node: NodeId,
    pub probability: Option<f64>,
    pub source: SignalSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    pub node: NodeId,
    pub from: DiscreteState,
    pub to: DiscreteState,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyOutput {
    pub decisions: Vec<PlannedAction>,
    pub warnings: Vec<Signal>,
    pub anomalies: Vec<AnomalyRecord>,
    /// Predictor evaluations spent this tick.
    pub predictions: u64,
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;
    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StrategyKind {
    Cp { interval: Tick },
    Rp { replicas: usize },
    Sm { threshold: usize },
    Ad { threshold: f64 },
    Adaptive,
}

impl StrategyKind {
    pub const NAMES: [&'static str; 5] = ["CP", "RP", "SM", "AD", "Adaptive"];

    pub fn from_name(name: &str, params: &StrategyParams) -> Result<Self> {
        match name {
            "CP" => Ok(StrategyKind::Cp {
                interval: params.cp_interval,
            }),
            "RP" => Ok(StrategyKind::Rp {
                replicas: params.rp_replicas,
            }),
            "SM" => Ok(StrategyKind::Sm {
                threshold: params.sm_threshold,
            }),
            "AD" => Ok(StrategyKind::Ad {
                threshold: params.ad_threshold,
            }),
            "Adaptive" => Ok(StrategyKind::Adaptive),
            other => Err(Error::config(
                "strategy",
                format!("must be one of {}", Self::NAMES.join(", ")),
                other,
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Cp { .. } => "CP",
            StrategyKind::Rp { .. } => "RP",
            StrategyKind::Sm { .. } => "SM",
            StrategyKind::Ad { .. } => "AD",
            StrategyKind::Adaptive => "Adaptive",
        }
    }

    pub fn needs_predictor(&self) -> bool {
        matches!(self, StrategyKind::Ad { .. } | StrategyKind::Adaptive)
    }

    /// Replicas the cluster keeps per task while this strategy runs.
    pub fn replicas(&self) -> usize {
        match self {
            StrategyKind::Rp { replicas } => *replicas,
            _ => 0,
        }
    }

    pub fn build(
        &self,
        cfg: &ScenarioConfig,
        weights: Option<&PredictorWeights>,
    ) -> Result<Box<dyn Strategy>> {
        let need = || {
            weights.cloned().ok_or_else(|| {
                Error::Input(format!(
                    "strategy {} needs trained predictor weights",
                    self.name()
                ))
            })
        };
        Ok(match self {
            StrategyKind::Cp { interval } => {
                if *interval < 1 {
                    return Err(Error::config(
                        "strategies.cp_interval",
                        "must be >= 1",
                        interval,
                    ));
                }
                Box::new(FixedCheckpoint {
                    interval: *interval,
                })
            }
            StrategyKind::Rp { .. } => Box::new(Replication),
            StrategyKind::Sm { threshold } => Box::new(StateMigration {
                threshold: DiscreteState(*threshold),
            }),
            StrategyKind::Ad { threshold } => Box::new(AnomalyCheckpoint {
                weights: need()?,
                threshold: *threshold,
                min_gap: cfg.scheduler.min_interval,
            }),
            StrategyKind::Adaptive => Box::new(Adaptive::new(cfg, need()?)),
        })
    }
}

fn checkpoint(node: NodeId) -> PlannedAction {
    PlannedAction {
        action: Action::simple(ActionKind::Checkpoint, node),
        detail: None,
    }
}

/// Least-loaded Up node other than `exclude`: fewest tasks, then lowest
/// telemetry load, then lowest id.
pub fn least_loaded(obs: &Observation, exclude: NodeId) -> Option<NodeId> {
    obs.nodes
        .iter()
        .filter(|n| n.id != exclude && n.status == NodeStatus::Up)
        .min_by(|a, b| {
            (a.faulted, a.tasks)
                .cmp(&(b.faulted, b.tasks))
                .then(obs.loads[a.id].value().total_cmp(&obs.loads[b.id].value()))
                .then(a.id.cmp(&b.id))
        })
        .map(|n| n.id)
}

/// CP: checkpoint every node with tasks whenever `tick % interval == 0`.
#[derive(Debug)]
pub struct FixedCheckpoint {
    pub interval: Tick,
}

impl Strategy for FixedCheckpoint {
    fn name(&self) -> &'static str {
        "CP"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let mut out = StrategyOutput::default();
        if !obs.tick.is_multiple_of(self.interval) {
            return Ok(out);
        }
        for n in &obs.nodes {
            if n.tasks > 0 && n.status != NodeStatus::Down {
                out.decisions.push(checkpoint(n.id));
                out.warnings.push(Signal {
                    node: n.id,
                    probability: None,
                    source: SignalSource::Trigger,
                });
            }
        }
        Ok(out)
    }
}

/// RP: the cluster keeps the replicas; the strategy promotes one when a
/// primary is lost.
#[derive(Debug)]
pub struct Replication;

impl Strategy for Replication {
    fn name(&self) -> &'static str {
        "RP"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let mut out = StrategyOutput::default();
        let mut seen = Vec::new();
        for t in obs.tasks.iter().filter(|t| t.lost) {
            let Some(&(dest, _)) = t
                .replicas
                .iter()
                .find(|(n, ready)| *ready && obs.nodes[*n].status == NodeStatus::Up)
            else {
                continue;
            };
            if seen.contains(&(t.host, dest)) {
                continue;
            }
            seen.push((t.host, dest));
            out.decisions.push(PlannedAction {
                action: Action::moving(ActionKind::FailoverToBackup, t.host, dest)?,
                detail: None,
            });
        }
        Ok(out)
    }
}

/// SM: move work off any node whose health state reaches the threshold.
#[derive(Debug)]
pub struct StateMigration {
    pub threshold: DiscreteState,
}

impl Strategy for StateMigration {
    fn name(&self) -> &'static str {
        "SM"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let mut out = StrategyOutput::default();
        for n in &obs.nodes {
            if obs.states[n.id] < self.threshold || n.status == NodeStatus::Down {
                continue;
            }
            out.warnings.push(Signal {
                node: n.id,
                probability: None,
                source: SignalSource::Trigger,
            });
            if n.idle_tasks == 0 || n.status != NodeStatus::Up {
                continue;
            }
            if let Some(dest) = least_loaded(obs, n.id) {
                out.decisions.push(PlannedAction {
                    action: Action::moving(ActionKind::MigrateTask, n.id, dest)?,
                    detail: None,
                });
            }
        }
        Ok(out)
    }
}

/// AD: checkpoint immediately on every predictor warning.
#[derive(Debug)]
pub struct AnomalyCheckpoint {
    pub weights: PredictorWeights,
    pub threshold: f64,
    /// A warned node is not checkpointed again until this many ticks passed.
    pub min_gap: Tick,
}

impl Strategy for AnomalyCheckpoint {
    fn name(&self) -> &'static str {
        "AD"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        let mut out = StrategyOutput::default();
        for n in &obs.nodes {
            let p = predict_fault(&self.weights, obs.metrics[n.id])?;
            out.predictions += 1;
            if !is_warning(p, self.threshold) {
                continue;
            }
            out.warnings.push(Signal {
                node: n.id,
                probability: Some(p.value()),
                source: SignalSource::Prediction,
            });
            if n.status == NodeStatus::Up
                && n.idle_tasks > 0
                && n.since_checkpoint.is_some_and(|s| s >= self.min_gap)
            {
                out.decisions.push(checkpoint(n.id));
            }
        }
        Ok(out)
    }
}

/// The adaptive controller: predictor-driven checkpoint rate, Markov anomaly
/// flags, scored mitigation and the failover rule.
#[derive(Debug)]
pub struct Adaptive {
    weights: PredictorWeights,
    threshold: f64,
    scheduler: SchedulerConfig,
    anomaly: AnomalyConfig,
    mitigator: MitigatorConfig,
    restore_ticks: Tick,
    warm_restore_ticks: Tick,
    model: TransitionModel,
    prev_states: Vec<Option<DiscreteState>>,
    /// State each in-flight proactive action was chosen for.
    pending: BTreeMap<(NodeId, ActionKind), DiscreteState>,
}

impl Adaptive {
    pub fn new(cfg: &ScenarioConfig, weights: PredictorWeights) -> Self {
        Self::with_parts(
            weights,
            cfg.predictor.threshold,
            cfg.scheduler.clone(),
            cfg.anomaly.clone(),
            cfg.mitigator.clone(),
            &cfg.cluster,
        )
    }

    pub fn with_parts(
        weights: PredictorWeights,
        threshold: f64,
        scheduler: SchedulerConfig,
        anomaly: AnomalyConfig,
        mitigator: MitigatorConfig,
        cluster: &ClusterConfig,
    ) -> Self {
        let model = TransitionModel::new(anomaly.state_count, mitigator.prior);
        Self {
            weights,
            threshold,
            scheduler,
            anomaly,
            mitigator,
            restore_ticks: cluster.restore_ticks,
            warm_restore_ticks: cluster.warm_restore_ticks,
            model,
            prev_states: Vec::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    /// State implied by the fault probability alone. Capped one below Failed,
    /// since a node that still answers has not failed.
    fn risk_state(&self, p: FaultProbability) -> DiscreteState {
        let s = self.anomaly.state_count;
        let idx = (p.value() * s as f64).floor() as usize;
        DiscreteState(idx.min(s - 2))
    }

    fn backups(&self, obs: &Observation, exclude: NodeId) -> Vec<BackupResource> {
        obs.nodes
            .iter()
            .filter(|n| n.id != exclude && n.status == NodeStatus::Up && n.tasks == 0 && !n.faulted)
            .map(|n| BackupResource {
                node: n.id,
                warm: n.warm,
                restore_cost: if n.warm {
                    self.warm_restore_ticks
                } else {
                    self.restore_ticks
                },
            })
            .collect()
    }

    fn learn(&mut self, outcomes: &[ActionOutcome]) {
        let failed = self.anomaly.failed();
        for o in outcomes {
            let from = if o.reactive {
                Some(failed)
            } else {
                self.pending.remove(&(o.target, o.kind))
            };
            if let Some(from) = from {
                self.model.observe(from, o.kind, o.to_state);
            }
        }
    }
}

impl Strategy for Adaptive {
    fn name(&self) -> &'static str {
        "Adaptive"
    }

    fn decide(&mut self, obs: &Observation) -> Result<StrategyOutput> {
        self.learn(&obs.outcomes);
        let mut out = StrategyOutput::default();
        let count = obs.nodes.len();
        self.prev_states.resize(count, None);

        let probs = obs
            .metrics
            .iter()
            .map(|x| predict_fault(&self.weights, x))
            .collect::<Result<Vec<_>>>()?;
        out.predictions = count as u64;

        for n in &obs.nodes {
            let i = n.id;
            let p = probs[i];
            // The interval follows the cluster-wide load; the node's own load
            // prices its mitigation actions.
            let load = obs.loads[i];
            let rate = checkpoint_rate(p, obs.load, &self.scheduler);
            let interval = rate_to_interval(rate, &self.scheduler);
            // The controller tracks an effective state that fuses the
            // telemetry health bin with the predictor's risk bin.
            let s_eff = obs.states[i].max(self.risk_state(p));
            let degrading = match self.prev_states[i].replace(s_eff) {
                Some(prev) if is_anomalous(prev, s_eff, &self.anomaly) => {
                    out.anomalies.push(AnomalyRecord {
                        node: i,
                        from: prev,
                        to: s_eff,
                        probability: transition_prob(prev, s_eff, &self.anomaly),
                    });
                    s_eff > prev
                }
                _ => false,
            };
            let warned = is_warning(p, self.threshold);
            if warned || degrading {
                out.warnings.push(Signal {
                    node: i,
                    probability: Some(p.value()),
                    source: SignalSource::Prediction,
                });
            }
            let detail = |trigger, state: Option<DiscreteState>, candidates| DecisionDetail {
                trigger,
                probability: p.value(),
                load: obs.load.value(),
                rate: rate.value(),
                interval,
                node_load: load.value(),
                state: state.map(|s| s.index()),
                candidates,
            };

            if n.status == NodeStatus::Down {
                if n.lost_tasks > 0 {
                    let failed = self.anomaly.failed();
                    let backups = self.backups(obs, i);
                    if let Some(b) = should_failover(&self.model, failed, &backups, &self.mitigator)
                    {
                        out.decisions.push(PlannedAction {
                            action: Action::moving(ActionKind::FailoverToBackup, i, b.node)?,
                            detail: Some(detail(
                                DecisionTrigger::Recovery,
                                Some(failed),
                                Vec::new(),
                            )),
                        });
                    }
                }
                continue;
            }
            if n.status != NodeStatus::Up || n.idle_tasks == 0 {
                continue;
            }

            let since = n.since_checkpoint.unwrap_or(0);
            let mut mitigated = false;
            if warned || degrading {
                let mut candidates = vec![Action::simple(ActionKind::NoOp, i)];
                if since >= self.scheduler.min_interval {
                    candidates.push(Action::simple(ActionKind::Checkpoint, i));
                }
                if !n.throttled {
                    candidates.push(Action::simple(ActionKind::ThrottleLoad, i));
                }
                let dest = obs
                    .nodes
                    .iter()
                    .filter(|m| m.id != i && m.status == NodeStatus::Up && !m.faulted)
                    .min_by(|a, b| {
                        a.tasks
                            .cmp(&b.tasks)
                            .then(probs[a.id].value().total_cmp(&probs[b.id].value()))
                            .then(a.id.cmp(&b.id))
                    })
                    .map(|m| m.id);
                if let Some(d) = dest {
                    candidates.push(Action::moving(ActionKind::MigrateTask, i, d)?);
                }
                candidates.push(Action::simple(ActionKind::RestartNode, i));
                let backups = self.backups(obs, i);
                if let Some(b) = should_failover(&self.model, s_eff, &backups, &self.mitigator) {
                    candidates.push(Action::moving(ActionKind::FailoverToBackup, i, b.node)?);
                }
                let (chosen, scores) =
                    select_action_scored(s_eff, &candidates, load, &self.mitigator)?;
                let scored = candidates
                    .iter()
                    .zip(&scores)
                    .map(|(a, s)| ScoredCandidate {
                        action: a.kind,
                        destination: a.destination,
                        resource_cost: s.resource_cost,
                        fault_impact: s.fault_impact,
                        score: s.score,
                    })
                    .collect();
                let trigger = if warned {
                    DecisionTrigger::Warning
                } else {
                    DecisionTrigger::Anomaly
                };
                if chosen.kind != ActionKind::NoOp {
                    self.pending.insert((i, chosen.kind), s_eff);
                }
                mitigated = matches!(
                    chosen.kind,
                    ActionKind::Checkpoint | ActionKind::MigrateTask | ActionKind::FailoverToBackup
                );
                out.decisions.push(PlannedAction {
                    action: chosen,
                    detail: Some(detail(trigger, Some(s_eff), scored)),
                });
            }
            if !mitigated && since >= interval {
                out.decisions.push(PlannedAction {
                    action: Action::simple(ActionKind::Checkpoint, i),
                    detail: Some(detail(DecisionTrigger::Schedule, None, Vec::new())),
                });
            }
        }
        Ok(out)
    }
}

/// Health state of every node from its current readings.
pub fn node_states(metrics: &[&MetricVector], cfg: &AnomalyConfig) -> Result<Vec<DiscreteState>> {
    metrics.iter().map(|x| discretize_state(x, cfg)).collect()
}
