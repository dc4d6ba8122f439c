//! Device reachability detection (the `ping` protocol).
//!
//! Every member pings every member it knows once per period, including the
//! ones it currently considers out of reach. A member that stays silent for
//! `inactivity_threshold` consecutive periods is flagged unreachable and its
//! files drop out of the visible hierarchy until it is heard from again.

use crate::metadata::{Entry, HierarchyTree, MemberList, MemberName, MetadataError, NodeId, SeqNum};

pub const DEFAULT_PING_PERIOD: u64 = 5;
pub const DEFAULT_INACTIVITY_THRESHOLD: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PingMessage {
    pub sender_name: MemberName,
    pub member_seq: SeqNum,
    pub hier_seq: SeqNum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachabilityConfig {
    /// Ticks between pings.
    pub ping_period: u64,
    /// Silent periods before a member is flagged unreachable.
    pub inactivity_threshold: u32,
}

impl Default for ReachabilityConfig {
    fn default() -> Self {
        ReachabilityConfig { ping_period: DEFAULT_PING_PERIOD, inactivity_threshold: DEFAULT_INACTIVITY_THRESHOLD }
    }
}

impl ReachabilityConfig {
    pub fn new(ping_period: u64, inactivity_threshold: u32) -> Option<Self> {
        (ping_period >= 1 && inactivity_threshold >= 1).then_some(ReachabilityConfig { ping_period, inactivity_threshold })
    }
}

/// What a ping asks the receiver to do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncTrigger {
    Members(MemberName),
    Hierarchy(MemberName),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PingReceipt {
    /// False when the sender is not a known member; nothing else happened.
    pub known: bool,
    pub became_reachable: bool,
    pub triggers: Vec<SyncTrigger>,
}

/// Builds this period's pings: one per known member other than ourselves.
pub fn on_ping_timer(
    members: &MemberList,
    local: &MemberName,
    member_seq: SeqNum,
    hier_seq: SeqNum,
) -> Vec<(NodeId, PingMessage)> {
    members
        .iter()
        .filter(|r| &r.name != local)
        .map(|r| (r.address, PingMessage { sender_name: local.clone(), member_seq, hier_seq }))
        .collect()
}

pub fn on_ping_received(members: &mut MemberList, local: &MemberName, msg: &PingMessage) -> PingReceipt {
    if &msg.sender_name == local {
        return PingReceipt::default();
    }
    let Some(record) = members.get_mut(&msg.sender_name) else {
        return PingReceipt::default();
    };
    record.missed_pings = 0;
    let became_reachable = !record.reachable;
    record.reachable = true;

    let mut triggers = Vec::new();
    if msg.member_seq > record.known_member_seq {
        triggers.push(SyncTrigger::Members(msg.sender_name.clone()));
    }
    if msg.hier_seq > record.known_hier_seq {
        triggers.push(SyncTrigger::Hierarchy(msg.sender_name.clone()));
    }
    PingReceipt { known: true, became_reachable, triggers }
}

/// Counts one more silent period for every other member. Returns the
/// members that crossed the threshold in this period.
pub fn on_period_elapsed(members: &mut MemberList, local: &MemberName, config: &ReachabilityConfig) -> Vec<MemberName> {
    let mut newly_unreachable = Vec::new();
    for record in members.iter_mut().filter(|r| &r.name != local) {
        record.missed_pings = record.missed_pings.saturating_add(1);
        if record.reachable && record.missed_pings >= config.inactivity_threshold {
            record.reachable = false;
            newly_unreachable.push(record.name.clone());
        }
    }
    newly_unreachable
}

/// Files are visible when owned locally or by a member currently in reach.
pub fn owner_visible(members: &MemberList, local: Option<&MemberName>, owner: &MemberName) -> bool {
    local == Some(owner) || members.get(owner).is_some_and(|r| r.reachable)
}

/// Visibility of whatever `path` names. Folders are always visible.
pub fn visible(tree: &HierarchyTree, members: &MemberList, path: &str) -> Result<bool, MetadataError> {
    Ok(match tree.lookup(path)? {
        Entry::Folder(_) => true,
        Entry::File(f) => owner_visible(members, tree.local(), &f.owner),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::{FileEntry, MemberRecord};

    fn m(s: &str) -> MemberName {
        MemberName::new(s).unwrap()
    }

    fn list(names: &[&str]) -> MemberList {
        let mut l = MemberList::new();
        for (i, n) in names.iter().enumerate() {
            l.add(MemberRecord::new(m(n), NodeId(i as u32), 7000));
        }
        l
    }

    fn ping(from: &str, ms: u64, hs: u64) -> PingMessage {
        PingMessage { sender_name: m(from), member_seq: SeqNum(ms), hier_seq: SeqNum(hs) }
    }

    #[test]
    fn pings_go_to_everyone_including_unreachable() {
        let mut l = list(&["A", "B", "C", "D"]);
        l.get_mut(&m("D")).unwrap().reachable = false;
        let pings = on_ping_timer(&l, &m("A"), SeqNum(4), SeqNum(0));
        assert_eq!(pings.len(), 3);
        assert!(pings.iter().any(|(addr, _)| *addr == NodeId(3)));
        assert!(on_ping_timer(&MemberList::new(), &m("A"), SeqNum(0), SeqNum(0)).is_empty());
    }

    #[test]
    fn higher_member_seq_triggers_sync() {
        let mut l = list(&["A", "B"]);
        l.get_mut(&m("B")).unwrap().known_member_seq = SeqNum(5);
        let r = on_ping_received(&mut l, &m("A"), &ping("B", 7, 0));
        assert_eq!(r.triggers, vec![SyncTrigger::Members(m("B"))]);
        let r = on_ping_received(&mut l, &m("A"), &ping("B", 5, 0));
        assert!(r.triggers.is_empty());
        let r = on_ping_received(&mut l, &m("A"), &ping("B", 5, 1));
        assert_eq!(r.triggers, vec![SyncTrigger::Hierarchy(m("B"))]);
    }

    #[test]
    fn unknown_sender_ignored() {
        let mut l = list(&["A"]);
        let before = l.clone();
        assert!(!on_ping_received(&mut l, &m("A"), &ping("Z", 9, 9)).known);
        assert_eq!(l, before);
    }

    #[test]
    fn flagged_at_threshold_not_before() {
        let cfg = ReachabilityConfig::default();
        let mut l = list(&["A", "B"]);
        for period in 1..=3 {
            assert!(on_period_elapsed(&mut l, &m("A"), &cfg).is_empty(), "period {period}");
        }
        assert_eq!(on_period_elapsed(&mut l, &m("A"), &cfg), vec![m("B")]);
        assert!(on_period_elapsed(&mut l, &m("A"), &cfg).is_empty());
    }

    #[test]
    fn counter_reset_before_threshold() {
        let cfg = ReachabilityConfig::default();
        let mut l = list(&["A", "B"]);
        for _ in 0..3 {
            on_period_elapsed(&mut l, &m("A"), &cfg);
        }
        assert_eq!(l.get(&m("B")).unwrap().missed_pings, 3);
        let r = on_ping_received(&mut l, &m("A"), &ping("B", 0, 0));
        assert!(!r.became_reachable);
        let b = l.get(&m("B")).unwrap();
        assert_eq!((b.missed_pings, b.reachable), (0, true));
        for _ in 0..3 {
            assert!(on_period_elapsed(&mut l, &m("A"), &cfg).is_empty());
        }
    }

    #[test]
    fn simultaneous_silence() {
        let cfg = ReachabilityConfig::default();
        let mut l = list(&["A", "B", "C"]);
        let mut flagged = Vec::new();
        for _ in 0..4 {
            flagged = on_period_elapsed(&mut l, &m("A"), &cfg);
        }
        assert_eq!(flagged, vec![m("B"), m("C")]);
    }

    #[test]
    fn visibility_follows_owner_reachability() {
        let mut l = list(&["A", "M2"]);
        let mut tree = HierarchyTree::new(m("A"));
        tree.insert_entry("/", FileEntry::new("mine", m("A"), "0_mine")).unwrap();
        tree.insert_entry("/", FileEntry::new("theirs", m("M2"), "0_theirs")).unwrap();
        assert!(visible(&tree, &l, "/theirs").unwrap());
        l.get_mut(&m("M2")).unwrap().reachable = false;
        assert!(!visible(&tree, &l, "/theirs").unwrap());
        assert!(visible(&tree, &l, "/mine").unwrap());
        assert!(visible(&tree, &l, "/").unwrap());
        on_ping_received(&mut l, &m("A"), &ping("M2", 0, 0));
        assert!(visible(&tree, &l, "/theirs").unwrap());
        assert!(visible(&tree, &l, "/nope").is_err());
    }

    #[test]
    fn config_rejects_zero() {
        assert!(ReachabilityConfig::new(0, 4).is_none());
        assert!(ReachabilityConfig::new(5, 0).is_none());
        assert_eq!(ReachabilityConfig::new(5, 4), Some(ReachabilityConfig::default()));
    }
}
