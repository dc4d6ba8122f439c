//! Deterministic discrete-event network.
//!
//! One priority queue holds every future event (message deliveries, node
//! timers, scripted actions) ordered by `(tick, insertion order)`. All
//! randomness comes from a single ChaCha stream seeded from the config, so a
//! run is a pure function of its inputs.

pub mod wire;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metadata::NodeId;
use wire::Tag;

pub type Tick = u64;

pub const DEFAULT_LOSS_CAP: u32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetConfigError {
    #[error("delay range {0}..{1} is empty")]
    DelayRange(Tick, Tick),
    #[error("loss probability {0} outside [0, 1)")]
    Loss(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub seed: u64,
    pub delay_min: Tick,
    pub delay_max: Tick,
    /// Applies to datagram protocols only.
    pub loss_probability: f64,
    /// Most consecutive losses allowed per (src, dst, tag) before the next
    /// send is forced through.
    pub loss_cap: u32,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { seed: 0, delay_min: 1, delay_max: 3, loss_probability: 0.0, loss_cap: DEFAULT_LOSS_CAP }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetConfigError> {
        if self.delay_min > self.delay_max {
            return Err(NetConfigError::DelayRange(self.delay_min, self.delay_max));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(NetConfigError::Loss(self.loss_probability));
        }
        Ok(())
    }

    /// Transit time for a message, a pure function of its endpoints and
    /// send tick.
    pub fn delay(&self, src: NodeId, dst: NodeId, tick: Tick) -> Tick {
        let span = self.delay_max - self.delay_min + 1;
        let key = self.seed ^ splitmix64(((src.0 as u64) << 32) | dst.0 as u64) ^ splitmix64(tick.wrapping_add(0x5151));
        self.delay_min + splitmix64(key) % span
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// May be lost (ping, sync, name).
    Datagram,
    /// Ordered and lossless within a group; cut by partitions.
    Reliable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub src: NodeId,
    pub dst: NodeId,
    pub channel: Channel,
    /// The frame's first four bytes.
    pub protocol_tag: [u8; 4],
    /// The whole frame, tag included.
    pub payload: Vec<u8>,
    pub sent_at: Tick,
    pub deliver_at: Tick,
}

impl Envelope {
    pub fn tag(&self) -> Option<Tag> {
        Tag::from_bytes(self.protocol_tag)
    }

    pub fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.protocol_tag).into_owned()
    }
}

/// Disjoint groups of nodes. Unlisted nodes are cut off from everyone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionState {
    groups: Option<Vec<BTreeSet<NodeId>>>,
}

impl PartitionState {
    pub fn connected_all() -> Self {
        PartitionState { groups: None }
    }

    /// Later groups lose any node already claimed by an earlier one.
    pub fn split(groups: Vec<BTreeSet<NodeId>>) -> Self {
        let mut seen = BTreeSet::new();
        let groups = groups
            .into_iter()
            .map(|g| g.into_iter().filter(|n| seen.insert(*n)).collect::<BTreeSet<_>>())
            .filter(|g| !g.is_empty())
            .collect();
        PartitionState { groups: Some(groups) }
    }

    pub fn is_partitioned(&self) -> bool {
        self.groups.is_some()
    }

    pub fn groups(&self) -> Option<&[BTreeSet<NodeId>]> {
        self.groups.as_deref()
    }

    pub fn connected(&self, a: NodeId, b: NodeId) -> bool {
        match &self.groups {
            None => true,
            Some(_) if a == b => true,
            Some(groups) => groups.iter().any(|g| g.contains(&a) && g.contains(&b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    Deliver(Envelope),
    Timer(NodeId),
    /// Index into a caller-owned action list.
    Action(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Scheduled {
    at: Tick,
    seq: u64,
    event: SimEvent,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Queued { deliver_at: Tick },
    DroppedPartition,
    DroppedLoss,
}

/// Blanket duplication of whole message classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DupPolicy {
    pub freq_requests: bool,
    pub sync_replies: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_partition: u64,
    pub forced_by_cap: u64,
    pub duplicated: u64,
}

pub struct SimNet {
    config: NetConfig,
    partition: PartitionState,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    now: Tick,
    loss_enabled: bool,
    consecutive_losses: BTreeMap<(NodeId, NodeId, [u8; 4]), u32>,
    reliable_tail: BTreeMap<(NodeId, NodeId), Tick>,
    dup_next: BTreeMap<NodeId, Vec<Option<Tag>>>,
    dup_policy: DupPolicy,
    in_flight: usize,
    stats: NetStats,
}

impl SimNet {
    pub fn new(config: NetConfig) -> Result<Self, NetConfigError> {
        config.validate()?;
        Ok(SimNet {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            partition: PartitionState::default(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            loss_enabled: true,
            consecutive_losses: BTreeMap::new(),
            reliable_tail: BTreeMap::new(),
            dup_next: BTreeMap::new(),
            dup_policy: DupPolicy::default(),
            in_flight: 0,
            stats: NetStats::default(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn partition(&self) -> &PartitionState {
        &self.partition
    }

    pub fn set_partition(&mut self, partition: PartitionState) {
        self.partition = partition;
    }

    pub fn heal(&mut self) {
        self.partition = PartitionState::connected_all();
    }

    pub fn set_loss_enabled(&mut self, enabled: bool) {
        self.loss_enabled = enabled;
    }

    pub fn set_dup_policy(&mut self, policy: DupPolicy) {
        self.dup_policy = policy;
    }

    /// Duplicates the next message `node` sends, optionally only one with
    /// the given tag.
    pub fn duplicate_next(&mut self, node: NodeId, tag: Option<Tag>) {
        self.dup_next.entry(node).or_default().push(tag);
    }

    /// Messages queued but not yet delivered or dropped.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn next_event_at(&self) -> Option<Tick> {
        self.queue.peek().map(|Reverse(s)| s.at)
    }

    pub fn schedule(&mut self, at: Tick, event: SimEvent) {
        if matches!(event, SimEvent::Deliver(_)) {
            self.in_flight += 1;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { at: at.max(self.now), seq, event }));
    }

    pub fn send(&mut self, src: NodeId, dst: NodeId, channel: Channel, frame: Vec<u8>) -> SendOutcome {
        self.stats.sent += 1;
        let mut protocol_tag = [0u8; 4];
        let n = frame.len().min(4);
        protocol_tag[..n].copy_from_slice(&frame[..n]);

        if !self.partition.connected(src, dst) {
            self.stats.dropped_partition += 1;
            return SendOutcome::DroppedPartition;
        }

        let mut deliver_at = self.now + self.config.delay(src, dst, self.now);
        match channel {
            Channel::Datagram => {
                if self.loss_enabled && self.config.loss_probability > 0.0 {
                    let lost = self.rng.random::<f64>() < self.config.loss_probability;
                    let streak = self.consecutive_losses.entry((src, dst, protocol_tag)).or_insert(0);
                    if lost && *streak < self.config.loss_cap {
                        *streak += 1;
                        self.stats.dropped_loss += 1;
                        return SendOutcome::DroppedLoss;
                    }
                    if lost {
                        self.stats.forced_by_cap += 1;
                    }
                    *streak = 0;
                }
            }
            Channel::Reliable => {
                let tail = self.reliable_tail.entry((src, dst)).or_insert(0);
                deliver_at = deliver_at.max(*tail);
                *tail = deliver_at;
            }
        }

        let duplicate = self.take_dup(src, &frame);
        let env = Envelope { src, dst, channel, protocol_tag, payload: frame, sent_at: self.now, deliver_at };
        if duplicate {
            self.stats.duplicated += 1;
            self.schedule(deliver_at, SimEvent::Deliver(env.clone()));
        }
        self.schedule(deliver_at, SimEvent::Deliver(env));
        SendOutcome::Queued { deliver_at }
    }

    fn take_dup(&mut self, src: NodeId, frame: &[u8]) -> bool {
        let tag = wire::peek_tag(frame).ok();
        if let Some(pending) = self.dup_next.get_mut(&src) {
            if let Some(i) = pending.iter().position(|want| want.is_none() || *want == tag) {
                pending.remove(i);
                return true;
            }
        }
        (self.dup_policy.freq_requests && wire::is_freq_request_frame(frame))
            || (self.dup_policy.sync_replies && wire::is_sync_reply_frame(frame))
    }

    /// Pops the next event, advancing the clock. Deliveries whose endpoints
    /// have been separated since sending are dropped here.
    pub fn pop(&mut self) -> Option<(Tick, SimEvent)> {
        loop {
            let Reverse(next) = self.queue.pop()?;
            self.now = next.at;
            if let SimEvent::Deliver(env) = &next.event {
                self.in_flight -= 1;
                if !self.partition.connected(env.src, env.dst) {
                    self.stats.dropped_partition += 1;
                    continue;
                }
                self.stats.delivered += 1;
            }
            return Some((next.at, next.event));
        }
    }

    /// Moves the clock forward without processing anything. Never goes
    /// backwards or past a queued event.
    pub fn advance_to(&mut self, tick: Tick) {
        let limit = self.next_event_at().unwrap_or(Tick::MAX);
        self.now = self.now.max(tick.min(limit));
    }
}
