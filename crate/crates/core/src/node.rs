//! One member as a state machine.
//!
//! [`Node::step`] takes a single event (a timer firing, a delivered frame,
//! a local file operation or a join command) and returns the frames to
//! send plus notes for the trace. Nothing inside a node looks at another
//! node; the simulator carries the frames.
//!
//! Local operations are serialized: while a remote call is outstanding,
//! newly issued operations wait in a FIFO queue. Protocol traffic keeps
//! being handled in the meantime, so an owner waiting on its own call
//! still answers everyone else's.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::fileops::{
    check_create, choose_owner, handle_file_request, list_folder, resolve_open, route, FileOp, FileRequest,
    Listing, OpError,
};
use crate::hierarchy_sync::{apply_hierarchy_sync_counted, build_owned_subtree, HierarchySyncReply, HierarchySyncRequest};
use crate::membership::{JoinOutcome, MemberSyncRequest, Membership, NameRequest};
use crate::metadata::{Child, FolderNode, HierarchyTree, MemberList, MemberName, NodeId};
use crate::reachability::{on_period_elapsed, on_ping_received, on_ping_timer, ReachabilityConfig, SyncTrigger};
use crate::simnet::wire::{self, Message, Tag, WireError};
use crate::simnet::{Channel, Envelope, Tick};
use crate::storage::{handle_mont_request, BlobStore, DataRequest, DataResponse, MontRequest, MontStatus};

/// Every simulated member listens on the same abstract port.
pub const DEFAULT_PORT: u16 = 7000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeConfig {
    pub reach: ReachabilityConfig,
    /// Ticks a remote call may stay unanswered.
    pub call_timeout: Tick,
    pub quota: Option<u64>,
    /// Seeds the owner-selection RNG together with the node id.
    pub seed: u64,
}

impl NodeConfig {
    pub fn new(reach: ReachabilityConfig, seed: u64) -> Self {
        NodeConfig { reach, call_timeout: 10 * reach.ping_period, quota: None, seed }
    }
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig::new(ReachabilityConfig::default(), 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalOp {
    Create { path: String },
    Delete { path: String },
    Rename { path: String, new_name: String },
    Write { path: String, bytes: Vec<u8> },
    Read { path: String },
}

impl fmt::Display for LocalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalOp::Create { path } => write!(f, "create {path}"),
            LocalOp::Delete { path } => write!(f, "delete {path}"),
            LocalOp::Rename { path, new_name } => write!(f, "rename {path} {new_name}"),
            LocalOp::Write { path, bytes } => write!(f, "write {path} len={}", bytes.len()),
            LocalOp::Read { path } => write!(f, "read {path}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpValue {
    Done,
    Bytes(Vec<u8>),
}

pub type OpResult = Result<OpValue, OpError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub op: LocalOp,
    pub issued_at: Tick,
    pub finished_at: Tick,
    pub result: OpResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    Timer,
    Deliver(Envelope),
    Local(LocalOp),
    /// Start joining through the member at `host`.
    Join { host: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub dst: NodeId,
    pub channel: Channel,
    pub frame: Vec<u8>,
}

/// Something worth a trace line besides the event itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    Named(MemberName),
    PingRound { sent: usize },
    Unreachable(MemberName),
    Reachable(MemberName),
    MembersMerged { from: MemberName, added: bool },
    HierarchyApplied { from: MemberName, flagged: usize, unflagged: usize },
    Queued(LocalOp),
    OpDone { op: LocalOp, result: OpResult },
    Dropped(String),
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Note::Named(n) => write!(f, "named {n}"),
            Note::PingRound { sent } => write!(f, "ping-round sent={sent}"),
            Note::Unreachable(n) => write!(f, "unreachable {n}"),
            Note::Reachable(n) => write!(f, "reachable {n}"),
            Note::MembersMerged { from, added } => write!(f, "members-merged from={from} added={added}"),
            Note::HierarchyApplied { from, flagged, unflagged } => {
                write!(f, "hier-applied from={from} flagged={flagged} unflagged={unflagged}")
            }
            Note::Queued(op) => write!(f, "queued {op}"),
            Note::OpDone { op, result } => match result {
                Ok(OpValue::Done) => write!(f, "done {op} ok"),
                Ok(OpValue::Bytes(b)) => write!(f, "done {op} ok bytes={}", String::from_utf8_lossy(b)),
                Err(e) => write!(f, "done {op} err={e}"),
            },
            Note::Dropped(why) => write!(f, "dropped {why}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub sends: Vec<Outbound>,
    pub notes: Vec<Note>,
}

/// Counters kept for traces and reports; never part of the state digest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub sent: [u64; 6],
    pub received: [u64; 6],
    pub dropped_unknown_tag: u64,
    pub dropped_malformed: u64,
    pub hierarchy_syncs_applied: u64,
    pub member_syncs_merged: u64,
    pub conflicts_created: u64,
    pub conflicts_resolved: u64,
    pub ops_ok: u64,
    pub ops_failed: u64,
    pub timeouts: u64,
}

fn tag_index(tag: Tag) -> usize {
    Tag::ALL.iter().position(|t| *t == tag).expect("known tag")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Freq,
    Mount,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    call_id: u64,
    op: LocalOp,
    issued_at: Tick,
    deadline: Tick,
    stage: Stage,
    owner: MemberName,
    physical_name: String,
}

#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    config: NodeConfig,
    membership: Membership,
    tree: HierarchyTree,
    store: BlobStore,
    rng: ChaCha8Rng,
    join_host: Option<NodeId>,
    join_retry_at: Option<Tick>,
    next_ping_at: Option<Tick>,
    queue: VecDeque<(Tick, LocalOp)>,
    pending: Option<Pending>,
    next_call_id: u64,
    mounted: BTreeSet<MemberName>,
    completed: Vec<OpRecord>,
    stats: NodeStats,
}

impl Node {
    pub fn new(id: NodeId, config: NodeConfig) -> Self {
        let rng_seed = config.seed ^ (u64::from(id.0) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Node {
            id,
            config,
            membership: Membership::new(id, DEFAULT_PORT),
            tree: HierarchyTree::default(),
            store: BlobStore::new(config.quota),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            join_host: None,
            join_retry_at: None,
            next_ping_at: None,
            queue: VecDeque::new(),
            pending: None,
            next_call_id: 1,
            mounted: BTreeSet::new(),
            completed: Vec::new(),
            stats: NodeStats::default(),
        }
    }

    /// Names the first member of a system and starts its ping clock.
    pub fn bootstrap(&mut self, name: MemberName, now: Tick) {
        self.membership.bootstrap(name.clone());
        self.tree.set_local(name);
        self.next_ping_at = Some(now + self.config.reach.ping_period);
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn name(&self) -> Option<&MemberName> {
        self.membership.name.as_ref()
    }

    pub fn members(&self) -> &MemberList {
        &self.membership.list
    }

    pub fn tree(&self) -> &HierarchyTree {
        &self.tree
    }

    pub fn store(&self) -> &BlobStore {
        &self.store
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    pub fn completed(&self) -> &[OpRecord] {
        &self.completed
    }

    pub fn is_joining(&self) -> bool {
        self.join_host.is_some() && !self.membership.is_named()
    }

    /// No queued or outstanding local work and no join in progress.
    pub fn is_idle(&self) -> bool {
        self.pending.is_none() && self.queue.is_empty() && !self.is_joining()
    }

    pub fn has_outstanding_call(&self) -> bool {
        self.pending.is_some()
    }

    pub fn queued_ops(&self) -> usize {
        self.queue.len()
    }

    pub fn list(&self, path: &str) -> Result<Vec<Listing>, OpError> {
        list_folder(&self.tree, &self.membership.list, path)
    }

    /// Earliest tick at which a [`NodeEvent::Timer`] has work to do.
    pub fn next_wakeup(&self) -> Option<Tick> {
        let join = if self.is_joining() { self.join_retry_at } else { None };
        [self.next_ping_at, self.pending.as_ref().map(|p| p.deadline), join].into_iter().flatten().min()
    }

    pub fn step(&mut self, now: Tick, event: NodeEvent) -> StepOutput {
        let mut out = StepOutput::default();
        match event {
            NodeEvent::Timer => self.on_timer(now, &mut out),
            NodeEvent::Deliver(env) => self.on_frame(now, &env, &mut out),
            NodeEvent::Local(op) => {
                if self.pending.is_some() {
                    out.notes.push(Note::Queued(op.clone()));
                }
                self.queue.push_back((now, op));
                self.pump(now, &mut out);
            }
            NodeEvent::Join { host } => {
                if !self.membership.is_named() {
                    self.join_host = Some(host);
                    self.send_name_request(now, &mut out);
                }
            }
        }
        out
    }

    fn send(&mut self, out: &mut StepOutput, dst: NodeId, msg: &Message) {
        let tag = msg.tag();
        self.stats.sent[tag_index(tag)] += 1;
        let channel = if tag.is_datagram() { Channel::Datagram } else { Channel::Reliable };
        out.sends.push(Outbound { dst, channel, frame: wire::encode(msg) });
    }

    fn send_name_request(&mut self, now: Tick, out: &mut StepOutput) {
        let Some(host) = self.join_host else { return };
        let req = NameRequest { placeholder_name: format!("node{}", self.id.0), address: self.id, port: DEFAULT_PORT };
        self.send(out, host, &Message::NameRequest(req));
        self.join_retry_at = Some(now + self.config.reach.ping_period);
    }

    fn address_of(&self, member: &MemberName) -> Option<NodeId> {
        self.membership.list.get(member).map(|r| r.address)
    }

    fn on_timer(&mut self, now: Tick, out: &mut StepOutput) {
        if self.is_joining() && self.join_retry_at.is_some_and(|t| t <= now) {
            self.send_name_request(now, out);
        }
        if let (Some(at), Some(local)) = (self.next_ping_at, self.membership.name.clone()) {
            if at <= now {
                for lost in on_period_elapsed(&mut self.membership.list, &local, &self.config.reach) {
                    out.notes.push(Note::Unreachable(lost));
                }
                let pings = on_ping_timer(&self.membership.list, &local, self.membership.list.seq(), self.tree.own_seq());
                out.notes.push(Note::PingRound { sent: pings.len() });
                for (dst, ping) in pings {
                    self.send(out, dst, &Message::Ping(ping));
                }
                self.next_ping_at = Some(at + self.config.reach.ping_period);
            }
        }
        if self.pending.as_ref().is_some_and(|p| p.deadline <= now) {
            self.stats.timeouts += 1;
            self.finish(now, Err(OpError::TIMEOUT), out);
            self.pump(now, out);
        }
    }

    fn on_frame(&mut self, now: Tick, env: &Envelope, out: &mut StepOutput) {
        let msg = match wire::decode(&env.payload) {
            Ok(msg) => msg,
            Err(WireError::UnknownTag(raw)) => {
                self.stats.dropped_unknown_tag += 1;
                out.notes.push(Note::Dropped(format!("unknown tag {:?}", String::from_utf8_lossy(&raw))));
                return;
            }
            Err(e) => {
                self.stats.dropped_malformed += 1;
                out.notes.push(Note::Dropped(format!("malformed frame: {e}")));
                return;
            }
        };
        self.stats.received[tag_index(msg.tag())] += 1;

        let Some(local) = self.membership.name.clone() else {
            if let Message::NameReply(rep) = &msg {
                self.adopt_name(now, rep, env.src, out);
            }
            return;
        };

        match msg {
            Message::NameRequest(req) => {
                if let Some(rep) = self.membership.handle_name_request(&req) {
                    self.send(out, req.address, &Message::NameReply(rep));
                }
            }
            Message::NameReply(_) => {}
            Message::Ping(ping) => {
                let receipt = on_ping_received(&mut self.membership.list, &local, &ping);
                if receipt.became_reachable {
                    out.notes.push(Note::Reachable(ping.sender_name.clone()));
                }
                if let Some(dst) = self.address_of(&ping.sender_name) {
                    for trigger in receipt.triggers {
                        let msg = match trigger {
                            SyncTrigger::Members(_) => {
                                Message::MemberSyncRequest(MemberSyncRequest { requester_name: local.clone() })
                            }
                            SyncTrigger::Hierarchy(_) => {
                                Message::HierarchySyncRequest(HierarchySyncRequest { requester_name: local.clone() })
                            }
                        };
                        self.send(out, dst, &msg);
                    }
                }
            }
            Message::MemberSyncRequest(req) => {
                if let (Some(rep), Some(dst)) =
                    (self.membership.handle_member_sync_request(&req), self.address_of(&req.requester_name))
                {
                    self.send(out, dst, &Message::MemberSyncReply(rep));
                }
            }
            Message::MemberSyncReply(rep) => {
                let added = self.membership.merge_member_list(&rep);
                self.stats.member_syncs_merged += 1;
                out.notes.push(Note::MembersMerged { from: rep.provider_name, added });
            }
            Message::HierarchySyncRequest(req) => {
                if let Some(dst) = self.address_of(&req.requester_name) {
                    let rep = HierarchySyncReply {
                        provider_name: local.clone(),
                        provider_hier_seq: self.tree.own_seq(),
                        owned_tree: build_owned_subtree(&self.tree, &local),
                    };
                    self.send(out, dst, &Message::HierarchySyncReply(rep));
                }
            }
            Message::HierarchySyncReply(rep) => {
                if let Some(record) = self.membership.list.get_mut(&rep.provider_name) {
                    record.known_hier_seq = record.known_hier_seq.max(rep.provider_hier_seq);
                }
                if let Some(t) = apply_hierarchy_sync_counted(&mut self.tree, &rep) {
                    self.stats.hierarchy_syncs_applied += 1;
                    self.stats.conflicts_created += t.flagged as u64;
                    self.stats.conflicts_resolved += t.unflagged as u64;
                    out.notes.push(Note::HierarchyApplied {
                        from: rep.provider_name,
                        flagged: t.flagged,
                        unflagged: t.unflagged,
                    });
                }
            }
            Message::FreqRequest { call_id, req } => {
                let (resp, t) = handle_file_request(&mut self.tree, &mut self.store, &self.membership.list, &req);
                self.stats.conflicts_created += t.flagged as u64;
                self.stats.conflicts_resolved += t.unflagged as u64;
                self.send(out, env.src, &Message::FreqResponse { call_id, resp });
            }
            Message::FreqResponse { call_id, resp } => {
                if self.pending_matches(call_id, Stage::Freq) {
                    let result = resp.status.map(|()| OpValue::Done).map_err(OpError::Owner);
                    self.finish(now, result, out);
                    self.pump(now, out);
                }
            }
            Message::MontRequest { call_id, req } => {
                if let Some(reply) = handle_mont_request(&mut self.store, &self.membership.list, &req) {
                    self.send(out, env.src, &Message::MontReply { call_id, reply });
                }
            }
            Message::MontReply { call_id, reply } => {
                if self.pending_matches(call_id, Stage::Mount) {
                    match reply.status {
                        MontStatus::Granted => {
                            let pending = self.pending.as_ref().expect("matched").clone();
                            self.mounted.insert(pending.owner.clone());
                            self.send_data_request(now, out);
                        }
                        MontStatus::Ignored => {
                            self.finish(now, Err(OpError::Storage(crate::storage::StorageError::NotGranted)), out);
                            self.pump(now, out);
                        }
                    }
                }
            }
            Message::DataRequest { call_id, req } => {
                let resp = self.store.handle_data_request(&req);
                self.send(out, env.src, &Message::DataResponse { call_id, resp });
            }
            Message::DataResponse { call_id, resp } => {
                if self.pending_matches(call_id, Stage::Data) {
                    let result = match resp {
                        DataResponse::Read(bytes) => Ok(OpValue::Bytes(bytes)),
                        DataResponse::Written => Ok(OpValue::Done),
                        DataResponse::Failed(e) => Err(OpError::Storage(e)),
                    };
                    self.finish(now, result, out);
                    self.pump(now, out);
                }
            }
        }
    }

    fn adopt_name(&mut self, now: Tick, rep: &crate::membership::NameReply, host: NodeId, out: &mut StepOutput) {
        if self.join_host != Some(host) {
            out.notes.push(Note::Dropped("name reply from a host we did not ask".into()));
            return;
        }
        match self.membership.handle_name_reply(rep, host, DEFAULT_PORT) {
            JoinOutcome::Ignored => {}
            JoinOutcome::Adopted | JoinOutcome::AdoptedWithAnomaly => {
                let name = rep.assigned_name.clone();
                self.tree.set_local(name.clone());
                self.next_ping_at = Some(now + self.config.reach.ping_period);
                self.join_retry_at = None;
                out.notes.push(Note::Named(name));
            }
        }
    }

    fn pending_matches(&self, call_id: u64, stage: Stage) -> bool {
        self.pending.as_ref().is_some_and(|p| p.call_id == call_id && p.stage == stage)
    }

    fn finish(&mut self, now: Tick, result: OpResult, out: &mut StepOutput) {
        let Some(pending) = self.pending.take() else { return };
        self.record(pending.op, pending.issued_at, now, result, out);
    }

    fn record(&mut self, op: LocalOp, issued_at: Tick, now: Tick, result: OpResult, out: &mut StepOutput) {
        if result.is_ok() {
            self.stats.ops_ok += 1;
        } else {
            self.stats.ops_failed += 1;
        }
        out.notes.push(Note::OpDone { op: op.clone(), result: result.clone() });
        self.completed.push(OpRecord { op, issued_at, finished_at: now, result });
    }

    /// Starts queued operations until one has to wait on the network.
    fn pump(&mut self, now: Tick, out: &mut StepOutput) {
        while self.pending.is_none() {
            let Some((issued_at, op)) = self.queue.pop_front() else { break };
            if let Some(result) = self.start(now, issued_at, op.clone(), out) {
                self.record(op, issued_at, now, result, out);
            }
        }
    }

    /// Runs or dispatches one operation. Returns the result when it
    /// completed without waiting.
    fn start(&mut self, now: Tick, issued_at: Tick, op: LocalOp, out: &mut StepOutput) -> Option<OpResult> {
        let Some(local) = self.membership.name.clone() else {
            return Some(Err(OpError::NotJoined));
        };
        let members = &self.membership.list;
        let (owner, file_op, logical_path) = match &op {
            LocalOp::Create { path } => {
                if let Err(e) = check_create(&self.tree, members, path) {
                    return Some(Err(e));
                }
                let owner = choose_owner(members, &local, &mut self.rng);
                (owner, FileOp::Add, path.clone())
            }
            LocalOp::Delete { path } => match route(&self.tree, members, path) {
                Ok((owner, logical)) => (owner, FileOp::Delete, logical),
                Err(e) => return Some(Err(e)),
            },
            LocalOp::Rename { path, new_name } => match route(&self.tree, members, path) {
                Ok((owner, logical)) => (owner, FileOp::Rename { new_name: new_name.clone() }, logical),
                Err(e) => return Some(Err(e)),
            },
            LocalOp::Write { path, .. } | LocalOp::Read { path } => {
                let (owner, physical_name) = match resolve_open(&self.tree, members, path) {
                    Ok(found) => found,
                    Err(e) => return Some(Err(e)),
                };
                return self.start_data(now, issued_at, op, owner, physical_name, &local, out);
            }
        };

        let req = FileRequest { op: file_op, path: logical_path, requester: local.clone() };
        if owner == local {
            let (resp, t) = handle_file_request(&mut self.tree, &mut self.store, &self.membership.list, &req);
            self.stats.conflicts_created += t.flagged as u64;
            self.stats.conflicts_resolved += t.unflagged as u64;
            return Some(resp.status.map(|()| OpValue::Done).map_err(OpError::Owner));
        }
        let Some(dst) = self.address_of(&owner) else {
            return Some(Err(OpError::NotFound));
        };
        let call_id = self.take_call_id();
        self.send(out, dst, &Message::FreqRequest { call_id, req });
        self.pending = Some(Pending {
            call_id,
            op,
            issued_at,
            deadline: now + self.config.call_timeout,
            stage: Stage::Freq,
            owner,
            physical_name: String::new(),
        });
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn start_data(
        &mut self,
        now: Tick,
        issued_at: Tick,
        op: LocalOp,
        owner: MemberName,
        physical_name: String,
        local: &MemberName,
        out: &mut StepOutput,
    ) -> Option<OpResult> {
        if &owner == local {
            return Some(match &op {
                LocalOp::Write { bytes, .. } => self.store.write(&physical_name, bytes.clone()).map(|()| OpValue::Done),
                _ => self.store.read(&physical_name).map(OpValue::Bytes),
            }
            .map_err(OpError::Storage));
        }
        let Some(dst) = self.address_of(&owner) else {
            return Some(Err(OpError::NotFound));
        };
        let mounted = self.mounted.contains(&owner);
        let call_id = self.take_call_id();
        self.pending = Some(Pending {
            call_id,
            op,
            issued_at,
            deadline: now + self.config.call_timeout,
            stage: if mounted { Stage::Data } else { Stage::Mount },
            owner,
            physical_name,
        });
        if mounted {
            self.send_data_request(now, out);
        } else {
            let req = MontRequest { requester_name: local.clone() };
            self.send(out, dst, &Message::MontRequest { call_id, req });
        }
        None
    }

    fn take_call_id(&mut self) -> u64 {
        let id = self.next_call_id;
        self.next_call_id += 1;
        id
    }

    fn send_data_request(&mut self, now: Tick, out: &mut StepOutput) {
        let Some(local) = self.membership.name.clone() else { return };
        let call_id = self.take_call_id();
        let pending = self.pending.as_mut().expect("data request without a pending call");
        pending.call_id = call_id;
        pending.stage = Stage::Data;
        pending.deadline = now + self.config.call_timeout;
        let req = match &pending.op {
            LocalOp::Write { bytes, .. } => {
                DataRequest::Write { requester: local, physical_name: pending.physical_name.clone(), bytes: bytes.clone() }
            }
            _ => DataRequest::Read { requester: local, physical_name: pending.physical_name.clone() },
        };
        let owner = pending.owner.clone();
        if let Some(dst) = self.address_of(&owner) {
            self.send(out, dst, &Message::DataRequest { call_id, req });
        }
    }

    /// Canonical text form of everything except statistics.
    pub fn state_dump(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "id {}", self.id);
        let _ = writeln!(s, "name {:?}", self.membership.name.as_ref().map(MemberName::as_str));
        let _ = writeln!(s, "member-seq {}", self.membership.list.seq());
        for r in self.membership.list.iter() {
            let _ = writeln!(
                s,
                "member {} addr={} port={} reachable={} missed={} kms={} khs={}",
                r.name, r.address, r.port, r.reachable, r.missed_pings, r.known_member_seq, r.known_hier_seq
            );
        }
        let _ = writeln!(s, "own-seq {}", self.tree.own_seq());
        for (owner, seq) in self.tree.per_owner_seqs() {
            let _ = writeln!(s, "owner-seq {owner} {seq}");
        }
        dump_folder(&mut s, &self.tree.root, "/");
        for (name, bytes) in self.store.blobs() {
            let _ = writeln!(s, "blob {name} {}", hex::encode(bytes));
        }
        for g in self.store.granted() {
            let _ = writeln!(s, "granted {g}");
        }
        for m in &self.mounted {
            let _ = writeln!(s, "mounted {m}");
        }
        let _ = writeln!(s, "next-ping {:?} join {:?} calls {}", self.next_ping_at, self.join_host, self.next_call_id);
        let _ = writeln!(s, "pending {:?} queued {:?}", self.pending, self.queue);
        for rec in &self.completed {
            let _ = writeln!(s, "op {} @{}..{} {:?}", rec.op, rec.issued_at, rec.finished_at, rec.result);
        }
        s
    }

    pub fn state_digest(&self) -> String {
        hex::encode(Sha256::digest(self.state_dump().as_bytes()))
    }
}

fn dump_folder(s: &mut String, folder: &FolderNode, path: &str) {
    use std::fmt::Write as _;
    for child in &folder.children {
        match child {
            Child::Folder(sub) => {
                let sub_path = crate::metadata::join_path(path, &sub.name);
                let _ = writeln!(s, "dir {sub_path}");
                dump_folder(s, sub, &sub_path);
            }
            Child::File(f) => {
                let _ = writeln!(
                    s,
                    "file {path} {} owner={} phys={} conflicted={} synced={}",
                    f.logical_name, f.owner, f.physical_name, f.conflicted, f.owner_sync_seq
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> MemberName {
        MemberName::new(s).unwrap()
    }

    /// Hands every outbound frame straight to its destination with no
    /// delay, until nothing is left in flight.
    fn pump_all(nodes: &mut [Node], now: Tick, mut sends: Vec<(NodeId, Outbound)>) {
        while let Some((src, o)) = (!sends.is_empty()).then(|| sends.remove(0)) {
            let env = Envelope {
                src,
                dst: o.dst,
                channel: o.channel,
                protocol_tag: o.frame[..4].try_into().unwrap(),
                payload: o.frame,
                sent_at: now,
                deliver_at: now,
            };
            let dst = env.dst;
            let out = nodes[dst.0 as usize].step(now, NodeEvent::Deliver(env));
            sends.extend(out.sends.into_iter().map(|o| (dst, o)));
        }
    }

    fn tagged(out: &StepOutput) -> Vec<Tag> {
        out.sends.iter().map(|o| wire::peek_tag(&o.frame).unwrap()).collect()
    }

    fn pair() -> Vec<Node> {
        let mut a = Node::new(NodeId(0), NodeConfig::default());
        a.bootstrap(m("A"), 0);
        let b = Node::new(NodeId(1), NodeConfig::default());
        let mut nodes = vec![a, b];
        let out = nodes[1].step(0, NodeEvent::Join { host: NodeId(0) });
        assert_eq!(tagged(&out), vec![Tag::Name]);
        pump_all(&mut nodes, 0, out.sends.into_iter().map(|o| (NodeId(1), o)).collect());
        nodes
    }

    #[test]
    fn join_names_newcomer() {
        let nodes = pair();
        assert_eq!(nodes[1].name(), Some(&m("A/1")));
        assert_eq!(nodes[0].members().len(), 2);
        assert!(nodes[1].is_idle());
    }

    #[test]
    fn ping_boundary_pings_everyone() {
        let mut nodes = pair();
        assert_eq!(nodes[0].next_wakeup(), Some(5));
        let out = nodes[0].step(5, NodeEvent::Timer);
        assert_eq!(tagged(&out), vec![Tag::Ping]);
        assert_eq!(nodes[0].next_wakeup(), Some(10));
    }

    #[test]
    fn unnamed_node_only_asks_for_a_name() {
        let mut n = Node::new(NodeId(3), NodeConfig::default());
        let out = n.step(0, NodeEvent::Local(LocalOp::Create { path: "/x".into() }));
        assert!(out.sends.is_empty());
        assert_eq!(n.completed()[0].result, Err(OpError::NotJoined));
        assert!(n.step(9, NodeEvent::Timer).sends.is_empty());
    }

    #[test]
    fn unknown_tag_is_counted_and_dropped() {
        let mut nodes = pair();
        let env = Envelope {
            src: NodeId(1),
            dst: NodeId(0),
            channel: Channel::Datagram,
            protocol_tag: *b"zzzz",
            payload: b"zzzz".to_vec(),
            sent_at: 0,
            deliver_at: 0,
        };
        let before = nodes[0].state_dump();
        let out = nodes[0].step(1, NodeEvent::Deliver(env));
        assert!(out.sends.is_empty());
        assert_eq!(nodes[0].stats().dropped_unknown_tag, 1);
        assert_eq!(nodes[0].state_dump(), before);
    }

    #[test]
    fn sync_tag_routes_by_discriminator() {
        let mut nodes = pair();
        let req = wire::encode(&Message::HierarchySyncRequest(HierarchySyncRequest { requester_name: m("A/1") }));
        let env = Envelope {
            src: NodeId(1),
            dst: NodeId(0),
            channel: Channel::Datagram,
            protocol_tag: *b"sync",
            payload: req,
            sent_at: 0,
            deliver_at: 0,
        };
        let out = nodes[0].step(1, NodeEvent::Deliver(env));
        let reply = wire::decode(&out.sends[0].frame).unwrap();
        assert!(matches!(reply, Message::HierarchySyncReply(_)));
        let req = wire::encode(&Message::MemberSyncRequest(MemberSyncRequest { requester_name: m("A/1") }));
        let env = Envelope {
            src: NodeId(1),
            dst: NodeId(0),
            channel: Channel::Datagram,
            protocol_tag: *b"sync",
            payload: req,
            sent_at: 0,
            deliver_at: 0,
        };
        let out = nodes[0].step(1, NodeEvent::Deliver(env));
        assert!(matches!(wire::decode(&out.sends[0].frame).unwrap(), Message::MemberSyncReply(_)));
    }

    #[test]
    fn ops_queue_behind_outstanding_call() {
        let mut nodes = pair();
        // force remote ownership by making A the only reachable candidate other than B
        let mut tries = 0;
        loop {
            tries += 1;
            let out = nodes[1].step(1, NodeEvent::Local(LocalOp::Create { path: format!("/f{tries}") }));
            if !out.sends.is_empty() {
                assert_eq!(tagged(&out), vec![Tag::Freq]);
                break;
            }
            assert!(tries < 64, "owner selection never picked the host");
        }
        assert!(nodes[1].has_outstanding_call());
        let out = nodes[1].step(2, NodeEvent::Local(LocalOp::Create { path: "/queued".into() }));
        assert!(out.sends.is_empty());
        assert!(matches!(out.notes[..], [Note::Queued(_)]));
        assert_eq!(nodes[1].queued_ops(), 1);
        // nobody answers: the call times out ten periods after it was issued
        nodes[1].step(50, NodeEvent::Timer);
        assert!(nodes[1].has_outstanding_call());
        nodes[1].step(51, NodeEvent::Timer);
        let last = nodes[1].completed().iter().rev().find(|r| r.result == Err(OpError::TIMEOUT)).unwrap();
        assert_eq!(last.finished_at, 51);
        // the queued create ran right after
        assert_eq!(nodes[1].queued_ops(), 0);
    }

    #[test]
    fn digest_ignores_stats() {
        let mut nodes = pair();
        let d = nodes[0].state_digest();
        nodes[0].stats.ops_ok += 7;
        assert_eq!(nodes[0].state_digest(), d);
    }
}
