//! Drives a set of nodes over the simulated network and records a trace.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metadata::{MemberName, NodeId};
use crate::node::{LocalOp, Node, NodeConfig, NodeEvent, Note, StepOutput};
use crate::reachability::ReachabilityConfig;
use crate::simnet::wire::{self, Tag};
use crate::simnet::{DupPolicy, NetConfig, NetConfigError, PartitionState, SimEvent, SimNet, Tick};

use super::checker::{self, ConsistencyReport};
use super::Action;

/// Periods of silence the quiescence window lasts.
pub const QUIESCENCE_PERIODS: u64 = 20;
/// Upper bound, in periods, on waiting for outstanding work to drain
/// before the quiescence window starts.
pub const DRAIN_LIMIT_PERIODS: u64 = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} already exists")]
    DuplicateNode(String),
    #[error(transparent)]
    Net(#[from] NetConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tick: Tick,
    pub node: String,
    pub message: String,
}

pub struct Simulation {
    net: SimNet,
    nodes: Vec<Node>,
    labels: Vec<String>,
    index: BTreeMap<String, NodeId>,
    reach: ReachabilityConfig,
    timer_at: Vec<Option<Tick>>,
    trace: Vec<String>,
    check_invariants: bool,
    violations: Vec<Violation>,
    events_processed: u64,
}

impl Simulation {
    pub fn new(net: NetConfig, reach: ReachabilityConfig) -> Result<Self, SimError> {
        Ok(Simulation {
            net: SimNet::new(net)?,
            nodes: Vec::new(),
            labels: Vec::new(),
            index: BTreeMap::new(),
            reach,
            timer_at: Vec::new(),
            trace: Vec::new(),
            check_invariants: false,
            violations: Vec::new(),
            events_processed: 0,
        })
    }

    /// Check the per-event invariants after every node step.
    pub fn set_check_invariants(&mut self, on: bool) {
        self.check_invariants = on;
    }

    pub fn now(&self) -> Tick {
        self.net.now()
    }

    pub fn reach(&self) -> &ReachabilityConfig {
        &self.reach
    }

    pub fn net(&self) -> &SimNet {
        &self.net
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.0 as usize]
    }

    pub fn id(&self, label: &str) -> Result<NodeId, SimError> {
        self.index.get(label).copied().ok_or_else(|| SimError::UnknownNode(label.to_string()))
    }

    pub fn node(&self, label: &str) -> &Node {
        let id = self.id(label).unwrap_or_else(|e| panic!("{e}"));
        &self.nodes[id.0 as usize]
    }

    pub fn node_by_name(&self, name: &MemberName) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name() == Some(name))
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        let mut s = self.trace.join("\n");
        s.push('\n');
        s
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    fn log(&mut self, tick: Tick, who: &str, dir: &str, tag: &str, summary: impl AsRef<str>) {
        self.trace.push(format!("{tick} {who} {dir} {tag} {}", summary.as_ref()));
    }

    pub fn spawn(&mut self, label: &str, bootstrap: Option<MemberName>, quota: Option<u64>) -> Result<NodeId, SimError> {
        if self.index.contains_key(label) {
            return Err(SimError::DuplicateNode(label.to_string()));
        }
        let id = NodeId(self.nodes.len() as u32);
        let mut config = NodeConfig::new(self.reach, self.net.config().seed);
        config.quota = quota;
        let mut node = Node::new(id, config);
        let now = self.now();
        let summary = match &bootstrap {
            Some(name) => {
                node.bootstrap(name.clone(), now);
                format!("spawn bootstrap={name}")
            }
            None => "spawn".to_string(),
        };
        self.nodes.push(node);
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        self.timer_at.push(None);
        self.log(now, label, "act", "-", summary);
        self.reschedule(id);
        Ok(id)
    }

    pub fn join(&mut self, label: &str, host: &str) -> Result<(), SimError> {
        let host_id = self.id(host)?;
        let id = self.id(label)?;
        self.log(self.now(), label, "act", "name", format!("join via={host}"));
        self.deliver_event(id, NodeEvent::Join { host: host_id });
        Ok(())
    }

    pub fn op(&mut self, label: &str, op: LocalOp) -> Result<(), SimError> {
        let id = self.id(label)?;
        self.log(self.now(), label, "act", "-", format!("op {op}"));
        self.deliver_event(id, NodeEvent::Local(op));
        Ok(())
    }

    pub fn partition(&mut self, groups: &[Vec<String>]) -> Result<(), SimError> {
        let mut sets = Vec::new();
        for g in groups {
            sets.push(g.iter().map(|l| self.id(l)).collect::<Result<BTreeSet<_>, _>>()?);
        }
        let text: Vec<String> = groups.iter().map(|g| g.join(",")).collect();
        self.log(self.now(), "-", "act", "-", format!("partition {}", text.join(" ")));
        self.net.set_partition(PartitionState::split(sets));
        Ok(())
    }

    pub fn heal(&mut self) {
        self.log(self.now(), "-", "act", "-", "heal");
        self.net.heal();
    }

    pub fn duplicate_next(&mut self, label: &str, tag: Option<Tag>) -> Result<(), SimError> {
        let id = self.id(label)?;
        let tag_text = tag.map_or("-".to_string(), |t| t.to_string());
        self.log(self.now(), label, "act", &tag_text, "dup-next");
        self.net.duplicate_next(id, tag);
        Ok(())
    }

    pub fn set_dup_policy(&mut self, policy: DupPolicy) {
        self.net.set_dup_policy(policy);
    }

    pub fn set_loss_enabled(&mut self, on: bool) {
        self.net.set_loss_enabled(on);
    }

    /// Performs one scenario action now. Checkpoints return their report.
    pub fn apply(&mut self, action: &Action) -> Result<Option<ConsistencyReport>, SimError> {
        match action {
            Action::Spawn { node, bootstrap, quota } => {
                self.spawn(node, bootstrap.clone(), *quota)?;
            }
            Action::Join { node, host } => self.join(node, host)?,
            Action::Partition { groups } => self.partition(groups)?,
            Action::Heal => self.heal(),
            Action::Op { node, op } => self.op(node, op.clone())?,
            Action::Dup { node, tag } => self.duplicate_next(node, *tag)?,
            Action::Checkpoint { label } => return Ok(Some(self.checkpoint(label))),
        }
        Ok(None)
    }

    /// Processes every event up to and including `tick`, then moves the
    /// clock there. Stops at the first invariant violation.
    pub fn run_until(&mut self, tick: Tick) {
        while self.violations.is_empty() && self.net.next_event_at().is_some_and(|t| t <= tick) {
            self.step_one();
        }
        if self.violations.is_empty() {
            self.net.advance_to(tick);
        }
    }

    pub fn run_for(&mut self, ticks: Tick) {
        self.run_until(self.now() + ticks);
    }

    /// Processes the next queued event. Returns false when nothing is left.
    pub fn step_one(&mut self) -> bool {
        let Some((tick, event)) = self.net.pop() else { return false };
        match event {
            SimEvent::Deliver(env) => {
                let dst = env.dst;
                let tag = env.tag_str();
                let summary = match wire::decode(&env.payload) {
                    Ok(msg) => msg.summary(),
                    Err(e) => format!("undecodable: {e}"),
                };
                let line = format!("src={} {summary}", self.label(env.src));
                self.log(tick, &self.labels[dst.0 as usize].clone(), "in", &tag, line);
                self.deliver_event(dst, NodeEvent::Deliver(env));
            }
            SimEvent::Timer(id) => {
                if self.timer_at[id.0 as usize] != Some(tick) {
                    return true;
                }
                self.timer_at[id.0 as usize] = None;
                self.deliver_event(id, NodeEvent::Timer);
            }
            SimEvent::Action(_) => {}
        }
        true
    }

    fn deliver_event(&mut self, id: NodeId, event: NodeEvent) {
        let now = self.now();
        let out = self.nodes[id.0 as usize].step(now, event);
        self.events_processed += 1;
        self.emit(id, out);
        self.reschedule(id);
        if self.check_invariants {
            for message in checker::node_invariant_violations(self, id) {
                let node = self.label(id).to_string();
                self.log(now, &node, "chk", "-", format!("violation {message}"));
                self.violations.push(Violation { tick: now, node, message });
            }
        }
    }

    fn emit(&mut self, id: NodeId, out: StepOutput) {
        let now = self.now();
        let label = self.label(id).to_string();
        for note in &out.notes {
            let tag = match note {
                Note::Named(_) => "name",
                Note::PingRound { .. } | Note::Unreachable(_) | Note::Reachable(_) => "ping",
                Note::MembersMerged { .. } | Note::HierarchyApplied { .. } => "sync",
                _ => "-",
            };
            self.log(now, &label, "note", tag, note.to_string());
        }
        for send in out.sends {
            self.net.send(id, send.dst, send.channel, send.frame);
        }
    }

    fn reschedule(&mut self, id: NodeId) {
        let wake = self.nodes[id.0 as usize].next_wakeup();
        if let Some(at) = wake {
            if self.timer_at[id.0 as usize] != Some(at) {
                self.timer_at[id.0 as usize] = Some(at);
                self.net.schedule(at, SimEvent::Timer(id));
            }
        }
    }

    /// True when no node has queued or outstanding work or an unfinished
    /// join whose host could answer.
    pub fn drained(&self) -> bool {
        self.nodes.iter().all(Node::is_idle)
    }

    /// Disables loss, waits for outstanding operations to finish, then
    /// runs the quiescence window. Partitions are left as they are.
    pub fn settle(&mut self) {
        self.net.set_loss_enabled(false);
        let period = self.reach.ping_period;
        let limit = self.now() + DRAIN_LIMIT_PERIODS * period;
        while !self.drained() && self.now() < limit && self.violations.is_empty() {
            if !self.step_one() {
                break;
            }
        }
        let now = self.now();
        self.log(now, "-", "act", "-", format!("quiesce until={}", now + QUIESCENCE_PERIODS * period));
        self.run_for(QUIESCENCE_PERIODS * period);
    }

    pub fn check(&self, label: &str) -> ConsistencyReport {
        checker::check(self, label)
    }

    /// Runs the checker and records the verdict in the trace.
    pub fn checkpoint(&mut self, label: &str) -> ConsistencyReport {
        let report = self.check(label);
        let verdict = if report.converged { "converged" } else { "diverged" };
        self.log(self.now(), "-", "chk", "-", format!("checkpoint {label} {verdict}"));
        report
    }

    /// One digest per node label, in spawn order.
    pub fn digests(&self) -> Vec<(String, String)> {
        self.labels.iter().cloned().zip(self.nodes.iter().map(Node::state_digest)).collect()
    }
}
