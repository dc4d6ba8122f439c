//! Joining (the `name` protocol) and member-list propagation (the member
//! half of `sync`).

use std::collections::BTreeMap;

use crate::metadata::{MemberList, MemberName, MemberRecord, NodeId, SeqNum};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameRequest {
    /// May be empty; only used to recognise retransmissions.
    pub placeholder_name: String,
    pub address: NodeId,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameReply {
    pub assigned_name: MemberName,
    pub host_name: MemberName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberSyncRequest {
    pub requester_name: MemberName,
}

/// A member as advertised in a sync reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberInfo {
    pub name: MemberName,
    pub address: NodeId,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberSyncReply {
    pub provider_name: MemberName,
    pub provider_seq: SeqNum,
    pub members: Vec<MemberInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinOutcome {
    Adopted,
    /// The assigned name does not extend the host's name. Accepted anyway;
    /// members are trusted.
    AdoptedWithAnomaly,
    /// Already named: a duplicate or late reply.
    Ignored,
}

/// Naming and membership state of one member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    pub name: Option<MemberName>,
    pub address: NodeId,
    pub port: u16,
    pub list: MemberList,
    next_suffix: u64,
    /// Names already handed out, keyed by who asked, so a retransmitted
    /// request gets the same answer instead of a second name.
    assigned: BTreeMap<(NodeId, u16, String), MemberName>,
}

impl Membership {
    pub fn new(address: NodeId, port: u16) -> Self {
        Membership {
            name: None,
            address,
            port,
            list: MemberList::new(),
            next_suffix: 1,
            assigned: BTreeMap::new(),
        }
    }

    /// Names the very first member of a system.
    pub fn bootstrap(&mut self, name: MemberName) {
        self.list.add(MemberRecord::new(name.clone(), self.address, self.port));
        self.name = Some(name);
    }

    pub fn is_named(&self) -> bool {
        self.name.is_some()
    }

    /// Host side of `name`. Unnamed hosts cannot serve requests.
    pub fn handle_name_request(&mut self, req: &NameRequest) -> Option<NameReply> {
        let host = self.name.clone()?;
        let key = (req.address, req.port, req.placeholder_name.clone());
        let assigned = match self.assigned.get(&key) {
            Some(name) => name.clone(),
            None => {
                let name = host.child(self.next_suffix);
                self.next_suffix += 1;
                self.assigned.insert(key, name.clone());
                self.list.add(MemberRecord::new(name.clone(), req.address, req.port));
                name
            }
        };
        Some(NameReply { assigned_name: assigned, host_name: host })
    }

    /// Newcomer side of `name`: adopt the name and record the host.
    pub fn handle_name_reply(&mut self, rep: &NameReply, host_address: NodeId, host_port: u16) -> JoinOutcome {
        if self.name.is_some() {
            return JoinOutcome::Ignored;
        }
        let anomalous = !rep.host_name.is_strict_prefix_of(&rep.assigned_name);
        if anomalous {
            log::warn!("assigned name {} does not extend host name {}", rep.assigned_name, rep.host_name);
        }
        self.list.add(MemberRecord::new(rep.assigned_name.clone(), self.address, self.port));
        self.list.add(MemberRecord::new(rep.host_name.clone(), host_address, host_port));
        self.name = Some(rep.assigned_name.clone());
        if anomalous {
            JoinOutcome::AdoptedWithAnomaly
        } else {
            JoinOutcome::Adopted
        }
    }

    /// Provider side of member sync. Requests from unknown members get no
    /// answer.
    pub fn handle_member_sync_request(&self, req: &MemberSyncRequest) -> Option<MemberSyncReply> {
        let provider_name = self.name.clone()?;
        if !self.list.contains(&req.requester_name) {
            return None;
        }
        Some(MemberSyncReply {
            provider_name,
            provider_seq: self.list.seq(),
            members: self
                .list
                .iter()
                .map(|r| MemberInfo { name: r.name.clone(), address: r.address, port: r.port })
                .collect(),
        })
    }

    /// Receiver side of member sync. Returns whether the local list (and so
    /// its sequence number) changed.
    pub fn merge_member_list(&mut self, rep: &MemberSyncReply) -> bool {
        let before = self.list.seq();
        for info in &rep.members {
            self.list.add(MemberRecord::new(info.name.clone(), info.address, info.port));
        }
        if let Some(provider) = self.list.get_mut(&rep.provider_name) {
            provider.known_member_seq = provider.known_member_seq.max(rep.provider_seq);
        }
        self.list.seq() != before
    }
}
