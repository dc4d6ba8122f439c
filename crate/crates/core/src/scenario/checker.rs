//! Consistency oracle and per-event invariants.
//!
//! The oracle rebuilds, from scratch, what each node should be showing:
//! the union of the files owned by every named node it can currently talk
//! to, itself included. Conflict flags are derived from that union alone
//! (two owners of one name, or a file named like a non-empty folder).
//! Nothing here calls the merge code under test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::fileops::Listing;
use crate::metadata::{join_path, Child, FolderNode, MemberName, NodeId};
use crate::node::Node;

use super::sim::Simulation;

/// One visible file in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ViewLine {
    pub folder: String,
    pub logical_name: String,
    pub owner: MemberName,
    /// Position among the same owner's files in this folder.
    pub ordinal: usize,
    pub physical_name: String,
    pub conflicted: bool,
}

impl ViewLine {
    pub fn display_name(&self) -> String {
        if self.conflicted {
            format!("{}.CONFLICT.{}", self.logical_name, self.owner.as_str().replace('/', "-"))
        } else {
            self.logical_name.clone()
        }
    }

    fn render(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            join_path(&self.folder, &self.display_name()),
            self.owner,
            self.ordinal,
            self.physical_name,
            self.conflicted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeReport {
    pub label: String,
    pub name: Option<MemberName>,
    pub member_hash: String,
    pub view_hash: String,
    pub conflicts: Vec<String>,
    pub files: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub label: String,
    pub tick: u64,
    pub converged: bool,
    pub nodes: Vec<NodeReport>,
    pub divergences: Vec<String>,
}

impl ConsistencyReport {
    /// Structured `key=value` text, one pair per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let p = format!("check.{}", self.label);
        let _ = writeln!(s, "{p}.tick={}", self.tick);
        let _ = writeln!(s, "{p}.converged={}", self.converged);
        for n in &self.nodes {
            let q = format!("{p}.node.{}", n.label);
            let _ = writeln!(s, "{q}.name={}", n.name.as_ref().map_or("-", |m| m.as_str()));
            let _ = writeln!(s, "{q}.members={}", n.member_hash);
            let _ = writeln!(s, "{q}.view={}", n.view_hash);
            let _ = writeln!(s, "{q}.files={}", n.files);
            let _ = writeln!(s, "{q}.conflicts={}", n.conflicts.join(","));
        }
        let _ = writeln!(s, "{p}.divergences={}", self.divergences.len());
        for (i, d) in self.divergences.iter().enumerate() {
            let _ = writeln!(s, "{p}.divergence.{i}={d}");
        }
        s
    }
}

fn sha(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Files owned by `owner` in `root`, with ordinals, in tree order.
fn owned_lines(root: &FolderNode, owner: &MemberName) -> Vec<ViewLine> {
    fn walk(folder: &FolderNode, path: &str, owner: &MemberName, out: &mut Vec<ViewLine>) {
        let mut ordinal = 0;
        for child in &folder.children {
            match child {
                Child::File(f) if &f.owner == owner => {
                    out.push(ViewLine {
                        folder: path.to_string(),
                        logical_name: f.logical_name.clone(),
                        owner: owner.clone(),
                        ordinal,
                        physical_name: f.physical_name.clone(),
                        conflicted: false,
                    });
                    ordinal += 1;
                }
                Child::File(_) => {}
                Child::Folder(sub) => walk(sub, &join_path(path, &sub.name), owner, out),
            }
        }
    }
    let mut out = Vec::new();
    walk(root, "/", owner, &mut out);
    out
}

/// Named nodes `id` can currently exchange messages with, itself included.
fn group_of(sim: &Simulation, id: NodeId) -> Vec<&Node> {
    let partition = sim.net().partition();
    sim.nodes().iter().filter(|m| m.name().is_some() && partition.connected(id, m.id())).collect()
}

/// What node `id` should be showing, built from scratch.
pub fn expected_view(sim: &Simulation, id: NodeId) -> BTreeSet<ViewLine> {
    let mut lines: Vec<ViewLine> = Vec::new();
    for m in group_of(sim, id) {
        let name = m.name().expect("named").clone();
        lines.extend(owned_lines(&m.tree().root, &name));
    }
    let mut owners: BTreeMap<(String, String), BTreeSet<MemberName>> = BTreeMap::new();
    let mut folders: BTreeSet<String> = BTreeSet::new();
    for l in &lines {
        owners.entry((l.folder.clone(), l.logical_name.clone())).or_default().insert(l.owner.clone());
        let mut path = l.folder.clone();
        while path != "/" {
            folders.insert(path.clone());
            path = match path.rfind('/') {
                Some(0) => "/".to_string(),
                Some(i) => path[..i].to_string(),
                None => "/".to_string(),
            };
        }
    }
    lines
        .into_iter()
        .map(|mut l| {
            let key = (l.folder.clone(), l.logical_name.clone());
            l.conflicted = owners[&key].len() > 1 || folders.contains(&join_path(&l.folder, &l.logical_name));
            l
        })
        .collect()
}

/// What node `id` is actually showing: visible files, stored flags.
pub fn actual_view(node: &Node) -> BTreeSet<ViewLine> {
    fn walk(node: &Node, folder: &FolderNode, path: &str, out: &mut BTreeSet<ViewLine>) {
        let mut ordinals: BTreeMap<&MemberName, usize> = BTreeMap::new();
        for child in &folder.children {
            match child {
                Child::File(f) => {
                    let slot = ordinals.entry(&f.owner).or_insert(0);
                    let ordinal = *slot;
                    *slot += 1;
                    if owner_shown(node, &f.owner) {
                        out.insert(ViewLine {
                            folder: path.to_string(),
                            logical_name: f.logical_name.clone(),
                            owner: f.owner.clone(),
                            ordinal,
                            physical_name: f.physical_name.clone(),
                            conflicted: f.conflicted,
                        });
                    }
                }
                Child::Folder(sub) => walk(node, sub, &join_path(path, &sub.name), out),
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(node, &node.tree().root, "/", &mut out);
    out
}

/// Visibility straight from the member records, without the library's
/// helper.
fn owner_shown(node: &Node, owner: &MemberName) -> bool {
    node.name() == Some(owner) || node.members().iter().any(|r| &r.name == owner && r.reachable)
}

fn render(view: &BTreeSet<ViewLine>) -> String {
    view.iter().map(|l| l.render() + "\n").collect()
}

fn member_text(node: &Node) -> String {
    let names: BTreeSet<&str> = node.members().names().map(MemberName::as_str).collect();
    names.into_iter().map(|n| format!("{n}\n")).collect()
}

/// Compares every named node against the oracle.
pub fn check(sim: &Simulation, label: &str) -> ConsistencyReport {
    let mut divergences = Vec::new();
    let mut nodes = Vec::new();
    for node in sim.nodes() {
        let node_label = sim.label(node.id()).to_string();
        let actual = actual_view(node);
        let conflicts = actual.iter().filter(|l| l.conflicted).map(|l| join_path(&l.folder, &l.display_name())).collect();
        nodes.push(NodeReport {
            label: node_label.clone(),
            name: node.name().cloned(),
            member_hash: sha(&member_text(node)),
            view_hash: sha(&render(&actual)),
            conflicts,
            files: actual.len(),
        });

        if node.name().is_none() {
            if node.is_joining() {
                divergences.push(format!("{node_label}: never got a name"));
            }
            continue;
        }
        if !node.is_idle() {
            divergences.push(format!("{node_label}: work still outstanding"));
        }
        let expected = expected_view(sim, node.id());
        for missing in expected.difference(&actual).take(3) {
            divergences.push(format!("{node_label}: missing {}", missing.render().replace('\t', " ")));
        }
        for extra in actual.difference(&expected).take(3) {
            divergences.push(format!("{node_label}: unexpected {}", extra.render().replace('\t', " ")));
        }
        let known: BTreeSet<&MemberName> = node.members().names().collect();
        for peer in group_of(sim, node.id()) {
            let peer_name = peer.name().expect("named");
            if !known.contains(peer_name) {
                divergences.push(format!("{node_label}: does not know {peer_name}"));
            }
            if !owner_shown(node, peer_name) {
                divergences.push(format!("{node_label}: considers {peer_name} unreachable"));
            }
        }
    }
    // hashes must agree within each group
    for node in sim.nodes().iter().filter(|n| n.name().is_some()) {
        let mine = &nodes[node.id().0 as usize];
        for peer in group_of(sim, node.id()) {
            let theirs = &nodes[peer.id().0 as usize];
            if peer.id() > node.id() && (mine.member_hash != theirs.member_hash || mine.view_hash != theirs.view_hash) {
                divergences.push(format!("{} and {}: hashes differ within a group", mine.label, theirs.label));
            }
        }
    }
    ConsistencyReport {
        label: label.to_string(),
        tick: sim.now(),
        converged: divergences.is_empty(),
        nodes,
        divergences,
    }
}

/// Invariants that must hold after every event, checked for the node that
/// just handled it.
pub fn node_invariant_violations(sim: &Simulation, id: NodeId) -> Vec<String> {
    let node = &sim.nodes()[id.0 as usize];
    let mut out = Vec::new();

    // names are unique across the system
    if let Some(name) = node.name() {
        if sim.nodes().iter().any(|m| m.id() != id && m.name() == Some(name)) {
            out.push(format!("name {name} held twice"));
        }
    }

    // tree shape and conflict flags
    check_folder(&node.tree().root, "/", &mut out);

    // listings show exactly the files whose owner is local or reachable
    check_listings(node, &node.tree().root, "/", &mut out);

    // a finished sync round with an owner leaves exactly that owner's files
    for record in node.members().iter() {
        if !record.reachable || node.name() == Some(&record.name) {
            continue;
        }
        let Some(owner) = sim.node_by_name(&record.name) else { continue };
        if node.tree().per_owner_seq(&record.name) != Some(owner.tree().own_seq()) {
            continue;
        }
        let want = owned_lines(&owner.tree().root, &record.name);
        let have = owned_lines(&node.tree().root, &record.name);
        // folders may sit in different positions, so compare folder by folder
        let strip = |v: Vec<ViewLine>| -> Vec<(String, usize, String, String)> {
            let mut v: Vec<_> = v.into_iter().map(|l| (l.folder, l.ordinal, l.logical_name, l.physical_name)).collect();
            v.sort();
            v
        };
        if strip(want) != strip(have) {
            out.push(format!("synced with {} at its current seq but holds a different set of its files", record.name));
        }
    }
    out
}

fn check_folder(folder: &FolderNode, path: &str, out: &mut Vec<String>) {
    let mut owners: BTreeMap<&str, BTreeSet<&MemberName>> = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    let mut subfolders = BTreeSet::new();
    let mut full_subfolders = BTreeSet::new();
    for child in &folder.children {
        match child {
            Child::File(f) => {
                if !pairs.insert((f.logical_name.as_str(), &f.owner)) {
                    out.push(format!("{path}: duplicate file {} of {}", f.logical_name, f.owner));
                }
                owners.entry(&f.logical_name).or_default().insert(&f.owner);
            }
            Child::Folder(sub) => {
                if !subfolders.insert(sub.name.as_str()) {
                    out.push(format!("{path}: duplicate folder {}", sub.name));
                }
                let mut has_file = false;
                sub.walk_files("/", &mut |_, _| has_file = true);
                if has_file {
                    full_subfolders.insert(sub.name.as_str());
                }
            }
        }
    }
    for f in folder.files() {
        let want = owners[f.logical_name.as_str()].len() > 1 || full_subfolders.contains(f.logical_name.as_str());
        if f.conflicted != want {
            out.push(format!("{path}: {} of {} has conflicted={} but should be {want}", f.logical_name, f.owner, f.conflicted));
        }
    }
    for sub in folder.folders() {
        check_folder(sub, &join_path(path, &sub.name), out);
    }
}

fn check_listings(node: &Node, folder: &FolderNode, path: &str, out: &mut Vec<String>) {
    let listed: BTreeSet<(String, MemberName)> = match node.list(path) {
        Ok(entries) => entries
            .into_iter()
            .filter_map(|e| match e {
                Listing::File { display_name, owner } => Some((display_name, owner)),
                Listing::Folder(_) => None,
            })
            .collect(),
        Err(e) => {
            out.push(format!("{path}: listing failed: {e}"));
            return;
        }
    };
    for (_, owner) in &listed {
        if !owner_shown(node, owner) {
            out.push(format!("{path}: lists a file of unreachable {owner}"));
        }
    }
    let shown: usize = folder.files().filter(|f| owner_shown(node, &f.owner)).count();
    if shown != listed.len() {
        out.push(format!("{path}: {} files visible but {} listed", shown, listed.len()));
    }
    for sub in folder.folders() {
        check_listings(node, sub, &join_path(path, &sub.name), out);
    }
}
