//! Tick-driven cluster simulator.
//!
//! Each tick runs five phases in a fixed order:
//!
//! 1. read telemetry for the tick and build the observation,
//! 2. let the strategy decide,
//! 3. apply its actions, then start cluster-default restores for lost tasks
//!    that no action picked up,
//! 4. expire transient faults and repairs, then inject faults scheduled for
//!    the tick,
//! 5. advance tasks and in-flight operations, settle recovered faults and
//!    emit the `MetricTick` summary.
//!
//! Tasks are placed one per node on nodes `0..tasks`. Actions address nodes
//! and apply to every eligible task on the target.

use crate::anomaly::DiscreteState;
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::events::{EventLog, EventPayload, MigrationStatus, RecoveryRoute, SimEvent, TaskId};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::mitigator::{Action, ActionKind};
use crate::predictor::PredictorWeights;
use crate::strategies::{
    node_states, ActionOutcome, NodeStatus, NodeView, Observation, Strategy, StrategyKind, TaskView,
};
use crate::telemetry::{
    generate_trace, system_load, FaultEventSpec, FaultKind, MetricVector, NodeId, SystemLoad,
    TelemetryTrace, Tick,
};

/// Network slowdown never exceeds this severity, so durations stay finite.
const MAX_SLOWDOWN: f64 = 0.9;

#[derive(Debug, Clone)]
struct NodeState {
    status: NodeStatus,
    /// Repair tick when Down, return tick when Recovering.
    until: Tick,
    warm: bool,
    throttled_until: Tick,
    hardware_fault: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Idle,
    Saving {
        remaining: Tick,
        snapshot: u64,
    },
    Migrating {
        remaining: Tick,
        dest: NodeId,
        kind: ActionKind,
    },
    Lost {
        since: Tick,
    },
    Restoring {
        remaining: Tick,
        from: NodeId,
    },
}

#[derive(Debug, Clone)]
struct Replica {
    node: NodeId,
    ready_at: Tick,
}

#[derive(Debug, Clone)]
struct Task {
    host: NodeId,
    progress: u64,
    checkpoint: u64,
    last_save: Tick,
    op: Op,
    replicas: Vec<Replica>,
}

impl Task {
    /// Progress a restore must recompute: everything since the last
    /// checkpoint or finished job, whichever is later.
    fn lost_work(&self, job_ticks: u64) -> u64 {
        let durable = self
            .checkpoint
            .max(self.progress - self.progress % job_ticks);
        self.progress - durable
    }
}

#[derive(Debug, Clone)]
struct Transient {
    fault: usize,
    node: NodeId,
    kind: FaultKind,
    severity: f64,
    ends_at: Tick,
    affected: Vec<TaskId>,
}

#[derive(Debug, Clone)]
struct OpenFault {
    fault: usize,
    start: Tick,
    affected: Vec<TaskId>,
}

fn slowed(base: Tick, severity: f64) -> Tick {
    let s = severity.min(MAX_SLOWDOWN);
    (base as f64 / (1.0 - s)).ceil() as Tick
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    trace: &'a TelemetryTrace,
    replicas: usize,
    nodes: Vec<NodeState>,
    tasks: Vec<Task>,
    transients: Vec<Transient>,
    open: Vec<OpenFault>,
    outcomes: Vec<ActionOutcome>,
    log: EventLog,
    prediction_acc: u64,
    upkeep_acc: u64,
    tick_cost: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, trace: &'a TelemetryTrace, replicas: usize) -> Self {
        let c = &cfg.cluster;
        let node_count = trace.node_count();
        let nodes = (0..node_count)
            .map(|i| NodeState {
                status: NodeStatus::Up,
                until: 0,
                warm: i >= c.tasks && i < c.tasks + c.warm_backups,
                throttled_until: 0,
                hardware_fault: None,
            })
            .collect();
        let tasks = (0..c.tasks)
            .map(|i| Task {
                host: i,
                progress: 0,
                checkpoint: 0,
                last_save: 0,
                op: Op::Idle,
                replicas: Vec::new(),
            })
            .collect();
        let mut engine = Self {
            cfg,
            trace,
            replicas,
            nodes,
            tasks,
            transients: Vec::new(),
            open: Vec::new(),
            outcomes: Vec::new(),
            log: EventLog::default(),
            prediction_acc: 0,
            upkeep_acc: 0,
            tick_cost: 0,
        };
        // Replicas are deployed with the tasks and start syncing at tick 0.
        engine.place_replicas(0);
        engine
    }

    fn slowdown(&self, node: NodeId) -> f64 {
        self.transients
            .iter()
            .filter(|f| f.node == node && f.kind == FaultKind::NetworkInstability)
            .map(|f| f.severity)
            .fold(0.0, f64::max)
    }

    fn duration_on(&self, base: Tick, nodes: &[NodeId]) -> Tick {
        let s = nodes.iter().map(|&n| self.slowdown(n)).fold(0.0, f64::max);
        slowed(base, s)
    }

    fn blocked(&self, task: TaskId) -> bool {
        let host = self.tasks[task].host;
        self.transients
            .iter()
            .any(|f| f.node == host && f.affected.contains(&task))
    }

    fn available(&self, task: TaskId) -> bool {
        !matches!(self.tasks[task].op, Op::Lost { .. } | Op::Restoring { .. })
            && !self.blocked(task)
    }

    fn node_faulted(&self, node: NodeId) -> bool {
        self.transients.iter().any(|f| f.node == node)
    }

    fn restore_base(&self, node: NodeId) -> Tick {
        if self.nodes[node].warm {
            self.cfg.cluster.warm_restore_ticks
        } else {
            self.cfg.cluster.restore_ticks
        }
    }

    fn tasks_on(&self, node: NodeId) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.tasks.len()).filter(move |&t| self.tasks[t].host == node)
    }

    fn observe<'t>(
        &self,
        tick: Tick,
        metrics: Vec<&'t MetricVector>,
        states: Vec<DiscreteState>,
        loads: Vec<SystemLoad>,
    ) -> Result<Observation<'t>> {
        let mean = loads.iter().map(|l| l.value()).sum::<f64>() / loads.len().max(1) as f64;
        let nodes = (0..self.nodes.len())
            .map(|i| {
                let on: Vec<TaskId> = self.tasks_on(i).collect();
                let idle: Vec<TaskId> = on
                    .iter()
                    .copied()
                    .filter(|&t| self.tasks[t].op == Op::Idle)
                    .collect();
                NodeView {
                    id: i,
                    status: self.nodes[i].status,
                    tasks: on.len(),
                    idle_tasks: idle.len(),
                    lost_tasks: on
                        .iter()
                        .filter(|&&t| matches!(self.tasks[t].op, Op::Lost { .. }))
                        .count(),
                    since_checkpoint: idle.iter().map(|&t| tick - self.tasks[t].last_save).max(),
                    throttled: self.nodes[i].throttled_until > tick,
                    warm: self.nodes[i].warm,
                    faulted: self.node_faulted(i),
                }
            })
            .collect();
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(id, t)| TaskView {
                id,
                host: t.host,
                lost: matches!(t.op, Op::Lost { .. }),
                replicas: t
                    .replicas
                    .iter()
                    .map(|r| (r.node, r.ready_at <= tick))
                    .collect(),
            })
            .collect();
        Ok(Observation {
            tick,
            metrics,
            states,
            loads,
            load: SystemLoad::new(mean.clamp(0.0, 1.0))?,
            nodes,
            tasks,
            outcomes: Vec::new(),
        })
    }

    /// Applies one action, returning whether it took effect and the events it
    /// caused.
    fn apply(&mut self, tick: Tick, action: &Action) -> (bool, Vec<EventPayload>) {
        let mut fx = Vec::new();
        let cfg = self.cfg;
        let c = &cfg.cluster;
        let target = action.target;
        if target >= self.nodes.len() || action.destination.is_some_and(|d| d >= self.nodes.len()) {
            return (false, fx);
        }
        let status = self.nodes[target].status;
        let idle: Vec<TaskId> = self
            .tasks_on(target)
            .filter(|&t| self.tasks[t].op == Op::Idle)
            .collect();
        let applied = match action.kind {
            ActionKind::NoOp => true,
            ActionKind::Checkpoint => {
                if status == NodeStatus::Down || idle.is_empty() {
                    false
                } else {
                    let duration = self.duration_on(c.save_ticks, &[target]);
                    for t in idle {
                        let task = &mut self.tasks[t];
                        task.op = Op::Saving {
                            remaining: duration,
                            snapshot: task.progress,
                        };
                        task.last_save = tick;
                        fx.push(EventPayload::CheckpointStart {
                            task: t,
                            node: target,
                            snapshot: task.progress,
                            duration,
                        });
                    }
                    true
                }
            }
            ActionKind::ThrottleLoad => {
                if status != NodeStatus::Up || self.nodes[target].throttled_until > tick {
                    false
                } else {
                    self.nodes[target].throttled_until = tick + c.throttle_ticks;
                    self.end_transients(
                        tick,
                        |f| f.node == target && f.kind == FaultKind::ResourceOverload,
                        &mut fx,
                    );
                    true
                }
            }
            ActionKind::RestartNode => {
                if status != NodeStatus::Up {
                    false
                } else {
                    self.nodes[target].status = NodeStatus::Recovering;
                    self.nodes[target].until = tick + c.restart_ticks;
                    self.end_transients(tick, |f| f.node == target, &mut fx);
                    true
                }
            }
            ActionKind::MigrateTask | ActionKind::FailoverToBackup
                if status != NodeStatus::Down =>
            {
                let Some(dest) = action.destination else {
                    return (false, fx);
                };
                if self.nodes[dest].status != NodeStatus::Up || idle.is_empty() {
                    false
                } else {
                    let base = if action.kind == ActionKind::MigrateTask {
                        c.migrate_ticks
                    } else {
                        self.restore_base(dest)
                    };
                    let duration = self.duration_on(base, &[target, dest]);
                    for t in idle {
                        self.tasks[t].op = Op::Migrating {
                            remaining: duration,
                            dest,
                            kind: action.kind,
                        };
                        if action.kind == ActionKind::FailoverToBackup {
                            fx.push(EventPayload::Failover {
                                task: t,
                                from: target,
                                to: dest,
                                replica: false,
                            });
                        }
                        fx.push(EventPayload::Migration {
                            task: t,
                            from: target,
                            to: dest,
                            status: MigrationStatus::Start,
                        });
                    }
                    true
                }
            }
            ActionKind::MigrateTask => false,
            ActionKind::FailoverToBackup => {
                let Some(dest) = action.destination else {
                    return (false, fx);
                };
                if self.nodes[dest].status != NodeStatus::Up {
                    return (false, fx);
                }
                let dest_empty = self.tasks_on(dest).next().is_none();
                let lost: Vec<TaskId> = self
                    .tasks_on(target)
                    .filter(|&t| matches!(self.tasks[t].op, Op::Lost { .. }))
                    .collect();
                let mut any = false;
                for t in lost {
                    let has_replica = self.tasks[t]
                        .replicas
                        .iter()
                        .any(|r| r.node == dest && r.ready_at <= tick);
                    if has_replica {
                        self.tasks[t].replicas.retain(|r| r.node != dest);
                        self.tasks[t].checkpoint = self.tasks[t].progress;
                        fx.push(EventPayload::Failover {
                            task: t,
                            from: target,
                            to: dest,
                            replica: true,
                        });
                        fx.push(self.start_restore(
                            t,
                            dest,
                            c.failover_ticks,
                            RecoveryRoute::Replica,
                        ));
                        any = true;
                    } else if dest_empty {
                        fx.push(EventPayload::Failover {
                            task: t,
                            from: target,
                            to: dest,
                            replica: false,
                        });
                        let base = self.restore_base(dest);
                        fx.push(self.start_restore(t, dest, base, RecoveryRoute::Backup));
                        any = true;
                    }
                }
                any
            }
        };
        (applied, fx)
    }

    /// Moves a lost task to `dest` and starts rebuilding it there. The
    /// duration covers the base cost plus recomputing work since the last
    /// checkpoint.
    fn start_restore(
        &mut self,
        task: TaskId,
        dest: NodeId,
        base: Tick,
        route: RecoveryRoute,
    ) -> EventPayload {
        let lost_work = self.tasks[task].lost_work(self.cfg.cluster.job_ticks);
        let duration = self.duration_on(base + lost_work, &[dest]);
        let from = self.tasks[task].host;
        let t = &mut self.tasks[task];
        t.host = dest;
        t.replicas.retain(|r| r.node != dest);
        t.op = Op::Restoring {
            remaining: duration,
            from,
        };
        EventPayload::RecoveryStart {
            task,
            from,
            to: dest,
            duration,
            lost_work,
            route,
        }
    }

    fn end_transients(
        &mut self,
        _tick: Tick,
        pred: impl Fn(&Transient) -> bool,
        fx: &mut Vec<EventPayload>,
    ) {
        let mut kept = Vec::with_capacity(self.transients.len());
        for f in std::mem::take(&mut self.transients) {
            if pred(&f) {
                fx.push(EventPayload::FaultEnd {
                    fault: f.fault,
                    node: f.node,
                    noop: false,
                });
            } else {
                kept.push(f);
            }
        }
        self.transients = kept;
    }

    /// Cluster default for a lost task: restore from its checkpoint on the
    /// least busy healthy node.
    fn default_destination(&self, loads: &[SystemLoad]) -> Option<NodeId> {
        (0..self.nodes.len())
            .filter(|&n| self.nodes[n].status == NodeStatus::Up)
            .min_by(|&a, &b| {
                let key = |n: NodeId| (self.node_faulted(n), self.tasks_on(n).count());
                key(a)
                    .cmp(&key(b))
                    .then(loads[a].value().total_cmp(&loads[b].value()))
                    .then(a.cmp(&b))
            })
    }

    fn apply_fault(&mut self, tick: Tick, id: usize, fault: &FaultEventSpec) {
        let node = fault.node;
        let noop = |engine: &mut Self| {
            engine.log.push(
                tick,
                EventPayload::FaultStart {
                    fault: id,
                    node,
                    fault_kind: fault.kind,
                    severity: fault.severity,
                    affected: Vec::new(),
                },
            );
            engine.log.push(
                tick,
                EventPayload::FaultEnd {
                    fault: id,
                    node,
                    noop: true,
                },
            );
        };
        if self.nodes[node].status == NodeStatus::Down {
            noop(self);
            return;
        }
        let absorbed =
            fault.kind == FaultKind::ResourceOverload && self.nodes[node].throttled_until > tick;
        if absorbed {
            noop(self);
            return;
        }
        let affected: Vec<TaskId> = self
            .tasks_on(node)
            .filter(|&t| !matches!(self.tasks[t].op, Op::Lost { .. }))
            .collect();
        let mut fx = Vec::new();
        match fault.kind {
            FaultKind::HardwareFailure => {
                // Inbound migrations fall back to their source.
                for t in 0..self.tasks.len() {
                    if let Op::Migrating { dest, .. } = self.tasks[t].op {
                        if dest == node && self.tasks[t].host != node {
                            self.tasks[t].op = Op::Idle;
                            fx.push(EventPayload::Migration {
                                task: t,
                                from: self.tasks[t].host,
                                to: node,
                                status: MigrationStatus::Aborted,
                            });
                        }
                    }
                }
                for &t in &affected {
                    if let Op::Migrating { dest, .. } = self.tasks[t].op {
                        fx.push(EventPayload::Migration {
                            task: t,
                            from: node,
                            to: dest,
                            status: MigrationStatus::Aborted,
                        });
                    }
                    self.tasks[t].op = Op::Lost { since: tick };
                }
                for task in self.tasks.iter_mut() {
                    task.replicas.retain(|r| r.node != node);
                }
                self.end_transients(tick, |f| f.node == node, &mut fx);
                let n = &mut self.nodes[node];
                n.status = NodeStatus::Down;
                n.until = tick + self.cfg.cluster.repair_ticks;
                n.hardware_fault = Some(id);
            }
            FaultKind::NetworkInstability | FaultKind::ResourceOverload => {
                if affected.is_empty() {
                    noop(self);
                    return;
                }
                if fault.kind == FaultKind::NetworkInstability {
                    for &t in &affected {
                        let s = fault.severity;
                        match &mut self.tasks[t].op {
                            Op::Saving { remaining, .. }
                            | Op::Migrating { remaining, .. }
                            | Op::Restoring { remaining, .. } => *remaining = slowed(*remaining, s),
                            _ => {}
                        }
                    }
                }
                self.transients.push(Transient {
                    fault: id,
                    node,
                    kind: fault.kind,
                    severity: fault.severity,
                    ends_at: tick + fault.duration.max(1),
                    affected: affected.clone(),
                });
            }
        }
        self.log.push(
            tick,
            EventPayload::FaultStart {
                fault: id,
                node,
                fault_kind: fault.kind,
                severity: fault.severity,
                affected: affected.clone(),
            },
        );
        for e in fx {
            self.log.push(tick, e);
        }
        if !affected.is_empty() {
            self.open.push(OpenFault {
                fault: id,
                start: tick,
                affected,
            });
        }
    }

    fn advance(&mut self, tick: Tick, states: &[DiscreteState]) {
        for t in 0..self.tasks.len() {
            let available = self.available(t);
            let host = self.tasks[t].host;
            match self.tasks[t].op {
                Op::Idle => {
                    if available {
                        self.tasks[t].progress += 1;
                    }
                }
                Op::Saving {
                    remaining,
                    snapshot,
                } => {
                    if remaining <= 1 {
                        self.tasks[t].checkpoint = snapshot;
                        self.tasks[t].op = Op::Idle;
                        self.log.push(
                            tick,
                            EventPayload::CheckpointDone {
                                task: t,
                                node: host,
                                snapshot,
                            },
                        );
                        self.outcomes.push(ActionOutcome {
                            target: host,
                            kind: ActionKind::Checkpoint,
                            reactive: false,
                            to_state: states[host],
                        });
                    } else {
                        self.tasks[t].op = Op::Saving {
                            remaining: remaining - 1,
                            snapshot,
                        };
                    }
                }
                Op::Migrating {
                    remaining,
                    dest,
                    kind,
                } => {
                    if available {
                        self.tasks[t].progress += 1;
                    }
                    if remaining > 1 {
                        self.tasks[t].op = Op::Migrating {
                            remaining: remaining - 1,
                            dest,
                            kind,
                        };
                        continue;
                    }
                    self.tasks[t].op = Op::Idle;
                    let status = if self.nodes[dest].status == NodeStatus::Down {
                        MigrationStatus::Aborted
                    } else {
                        let task = &mut self.tasks[t];
                        task.host = dest;
                        task.replicas.retain(|r| r.node != dest);
                        MigrationStatus::Done
                    };
                    self.log.push(
                        tick,
                        EventPayload::Migration {
                            task: t,
                            from: host,
                            to: dest,
                            status,
                        },
                    );
                    self.outcomes.push(ActionOutcome {
                        target: host,
                        kind,
                        reactive: false,
                        to_state: if status == MigrationStatus::Done {
                            states[dest]
                        } else {
                            DiscreteState::failed(self.cfg.anomaly.state_count)
                        },
                    });
                }
                Op::Restoring { remaining, from } => {
                    if remaining > 1 {
                        self.tasks[t].op = Op::Restoring {
                            remaining: remaining - 1,
                            from,
                        };
                    } else {
                        self.tasks[t].op = Op::Idle;
                        self.outcomes.push(ActionOutcome {
                            target: from,
                            kind: ActionKind::FailoverToBackup,
                            reactive: true,
                            to_state: states[host],
                        });
                    }
                }
                Op::Lost { .. } => {}
            }
        }
    }

    fn maintain_replicas(&mut self, tick: Tick) {
        if self.replicas == 0 {
            return;
        }
        self.place_replicas(tick);
        let replica_ticks: usize = self.tasks.iter().map(|t| t.replicas.len()).sum();
        self.upkeep_acc += replica_ticks as u64;
        let period = self.cfg.cluster.replica_upkeep_period;
        self.tick_cost += self.upkeep_acc / period;
        self.upkeep_acc %= period;
    }

    /// Drops replicas on Down nodes or on their own primary's host and tops
    /// every task back up to the target count on the least used Up nodes.
    fn place_replicas(&mut self, tick: Tick) {
        for t in 0..self.tasks.len() {
            let host = self.tasks[t].host;
            let nodes = &self.nodes;
            self.tasks[t]
                .replicas
                .retain(|r| nodes[r.node].status != NodeStatus::Down && r.node != host);
            while self.tasks[t].replicas.len() < self.replicas {
                let used = |n: NodeId| {
                    self.tasks
                        .iter()
                        .map(|task| task.replicas.iter().filter(|r| r.node == n).count())
                        .sum::<usize>()
                };
                let candidate = (0..self.nodes.len())
                    .filter(|&n| {
                        n != host
                            && self.nodes[n].status == NodeStatus::Up
                            && !self.tasks[t].replicas.iter().any(|r| r.node == n)
                    })
                    .min_by_key(|&n| (used(n), self.tasks_on(n).count(), n));
                let Some(node) = candidate else {
                    break;
                };
                self.tasks[t].replicas.push(Replica {
                    node,
                    ready_at: tick + self.cfg.cluster.replica_sync_ticks,
                });
            }
        }
    }

    fn settle_faults(&mut self, tick: Tick) {
        let mut still_open = Vec::with_capacity(self.open.len());
        for f in std::mem::take(&mut self.open) {
            if f.affected.iter().all(|&t| self.available(t)) {
                self.log.push(
                    tick,
                    EventPayload::RecoveryDone {
                        fault: f.fault,
                        recovery_time: tick - f.start,
                    },
                );
            } else {
                still_open.push(f);
            }
        }
        self.open = still_open;
    }

    fn step(&mut self, tick: Tick, strategy: &mut dyn Strategy) -> Result<()> {
        let cfg = self.cfg;
        let trace = self.trace;
        self.tick_cost = 0;

        // 1. telemetry
        let metrics: Vec<&MetricVector> = (0..self.nodes.len())
            .map(|n| trace.metric(n, tick))
            .collect();
        let states = node_states(&metrics, &cfg.anomaly)?;
        let loads = metrics
            .iter()
            .map(|x| system_load(x, &cfg.telemetry.load_weights))
            .collect::<Result<Vec<_>>>()?;
        let mut obs = self.observe(tick, metrics, states.clone(), loads.clone())?;
        obs.outcomes = std::mem::take(&mut self.outcomes);

        // 2. decide
        let out = strategy.decide(&obs)?;
        drop(obs);
        for w in out.warnings {
            self.log.push(
                tick,
                EventPayload::Warning {
                    node: w.node,
                    probability: w.probability,
                    source: w.source,
                },
            );
        }
        for a in out.anomalies {
            self.log.push(
                tick,
                EventPayload::AnomalyFlag {
                    node: a.node,
                    from_state: a.from.index(),
                    to_state: a.to.index(),
                    probability: a.probability,
                },
            );
        }
        self.prediction_acc += out.predictions;
        let per = cfg.cluster.predictions_per_cost_unit;
        self.tick_cost += self.prediction_acc / per;
        self.prediction_acc %= per;

        // 3. act
        for d in out.decisions {
            let (applied, fx) = self.apply(tick, &d.action);
            let cost = if applied {
                cfg.mitigator.cost(d.action.kind)?
            } else {
                0
            };
            self.log.push(
                tick,
                EventPayload::Decision {
                    node: d.action.target,
                    action: d.action.kind,
                    destination: d.action.destination,
                    applied,
                    cost,
                    detail: d.detail,
                },
            );
            for e in fx {
                self.log.push(tick, e);
            }
        }
        for t in 0..self.tasks.len() {
            let Op::Lost { since } = self.tasks[t].op else {
                continue;
            };
            if since >= tick {
                continue;
            }
            if let Some(dest) = self.default_destination(&loads) {
                let base = self.restore_base(dest);
                let e = self.start_restore(t, dest, base, RecoveryRoute::Checkpoint);
                self.log.push(tick, e);
            }
        }

        // 4. faults
        let mut fx = Vec::new();
        self.end_transients(tick, |f| f.ends_at <= tick, &mut fx);
        for e in fx {
            self.log.push(tick, e);
        }
        for n in 0..self.nodes.len() {
            let node = &mut self.nodes[n];
            if node.status != NodeStatus::Up && node.until <= tick {
                node.status = NodeStatus::Up;
                if let Some(fault) = node.hardware_fault.take() {
                    self.log.push(
                        tick,
                        EventPayload::FaultEnd {
                            fault,
                            node: n,
                            noop: false,
                        },
                    );
                }
            }
        }
        let faults = &trace.faults;
        let start = faults.partition_point(|f| f.tick < tick);
        for (id, fault) in faults.iter().enumerate().skip(start) {
            if fault.tick != tick {
                break;
            }
            self.apply_fault(tick, id, fault);
        }

        // 5. progress
        self.advance(tick, &states);
        self.maintain_replicas(tick);
        self.settle_faults(tick);
        let unavailable = (0..self.tasks.len())
            .filter(|&t| !self.available(t))
            .count();
        let mean = loads.iter().map(|l| l.value()).sum::<f64>() / loads.len().max(1) as f64;
        self.log.push(
            tick,
            EventPayload::MetricTick {
                load: mean,
                unavailable,
                cost: self.tick_cost,
            },
        );
        Ok(())
    }
}

fn check_trace(cfg: &ScenarioConfig, trace: &TelemetryTrace) -> Result<()> {
    let n = cfg.telemetry.indicator_count();
    if trace.node_count() != cfg.nodes() {
        return Err(Error::Input(format!(
            "trace has {} nodes, scenario declares {}",
            trace.node_count(),
            cfg.nodes()
        )));
    }
    if trace.indicators.len() != n || trace.metrics.iter().flatten().any(|x| x.len() != n) {
        return Err(Error::Dimension {
            context: "trace indicators",
            expected: n,
            actual: trace.indicators.len(),
        });
    }
    if let Some(f) = trace.faults.iter().find(|f| f.node >= cfg.nodes()) {
        return Err(Error::UnknownNode(f.node));
    }
    if cfg.cluster.tasks > trace.node_count() {
        return Err(Error::config(
            "cluster.tasks",
            "must not exceed the trace's node count",
            cfg.cluster.tasks,
        ));
    }
    Ok(())
}

/// Runs `strategy` over a fixed trace and returns the full event log.
/// `replicas` is the replica count the cluster maintains per task.
pub fn simulate(
    cfg: &ScenarioConfig,
    trace: &TelemetryTrace,
    strategy: &mut dyn Strategy,
    replicas: usize,
) -> Result<Vec<SimEvent>> {
    check_trace(cfg, trace)?;
    let mut engine = Engine::new(cfg, trace, replicas);
    for tick in 0..trace.ticks() {
        engine.step(tick, strategy)?;
    }
    Ok(engine.log.into_events())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub strategy: String,
    pub seed: u64,
    pub events: Vec<SimEvent>,
    pub metrics: RunMetrics,
}

pub fn run_on_trace(
    cfg: &ScenarioConfig,
    kind: &StrategyKind,
    trace: &TelemetryTrace,
    weights: Option<&PredictorWeights>,
) -> Result<SimReport> {
    let mut strategy = kind.build(cfg, weights)?;
    let events = simulate(cfg, trace, strategy.as_mut(), kind.replicas())?;
    let metrics = compute_metrics(&events, trace, cfg.predictor.horizon)?;
    Ok(SimReport {
        strategy: kind.name().to_string(),
        seed: trace.seed,
        events,
        metrics,
    })
}

/// Generates the seed's trace and runs one strategy on it.
pub fn run_simulation(
    cfg: &ScenarioConfig,
    kind: &StrategyKind,
    seed: u64,
    weights: Option<&PredictorWeights>,
) -> Result<SimReport> {
    let trace = generate_trace(&cfg.telemetry, seed)?;
    run_on_trace(cfg, kind, &trace, weights)
}
