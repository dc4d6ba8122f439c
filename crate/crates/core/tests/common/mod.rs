#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;

use edgefs::metadata::{Child, FileEntry, FolderNode, MemberName, NodeId, SeqNum};
use edgefs::node::{Node, NodeEvent, Outbound, StepOutput};
use edgefs::simnet::{Envelope, Tick};

pub fn m(s: &str) -> MemberName {
    MemberName::new(s).unwrap()
}

pub fn envelope(src: NodeId, out: &Outbound, now: Tick) -> Envelope {
    let mut tag = [0u8; 4];
    tag.copy_from_slice(&out.frame[..4]);
    Envelope {
        src,
        dst: out.dst,
        channel: out.channel,
        protocol_tag: tag,
        payload: out.frame.clone(),
        sent_at: now,
        deliver_at: now,
    }
}

/// Delivers messages instantly and in order until nobody has anything to say.
pub fn pump(nodes: &mut [Node], now: Tick, from: NodeId, out: StepOutput) {
    let mut queue: VecDeque<Envelope> = out.sends.iter().map(|o| envelope(from, o, now)).collect();
    while let Some(env) = queue.pop_front() {
        let dst = env.dst;
        let out = nodes[dst.0 as usize].step(now, NodeEvent::Deliver(env));
        queue.extend(out.sends.iter().map(|o| envelope(dst, o, now)));
    }
}

/// Scenario files shipped with the crate.
pub fn scenario_file(name: &str) -> String {
    let path = format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub const SCENARIO_FILES: &[&str] =
    &["jupiter.scn", "partition_heal.scn", "churn.scn", "file_ops.scn", "deep_folders.scn"];

// ---- folder merge ----

const OWNERS: [&str; 4] = ["A", "A/1", "A/2", "B"];
const FILE_NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];
const FOLDER_NAMES: [&str; 3] = ["x", "y", "z"];

fn random_children<R: Rng>(rng: &mut R, budget: &mut usize, depth: usize, only: Option<&MemberName>) -> Vec<Child> {
    let mut out = Vec::new();
    let mut used_pairs = Vec::new();
    let mut used_folders = Vec::new();
    let width = rng.random_range(0..=(*budget).min(8));
    for _ in 0..width {
        if *budget == 0 {
            break;
        }
        if depth < 2 && rng.random_bool(0.2) {
            let name = FOLDER_NAMES[rng.random_range(0..FOLDER_NAMES.len())];
            if used_folders.contains(&name) {
                continue;
            }
            used_folders.push(name);
            *budget -= 1;
            let children = random_children(rng, budget, depth + 1, only);
            out.push(Child::Folder(FolderNode { name: name.to_string(), children }));
        } else {
            let owner = match only {
                Some(o) => o.clone(),
                None => m(OWNERS[rng.random_range(0..OWNERS.len())]),
            };
            let name = FILE_NAMES[rng.random_range(0..FILE_NAMES.len())];
            if used_pairs.contains(&(name, owner.clone())) {
                continue;
            }
            used_pairs.push((name, owner.clone()));
            *budget -= 1;
            let physical = format!("{}-{}", name, rng.random_range(0..3));
            let mut f = FileEntry::new(name, owner, physical);
            f.conflicted = rng.random_bool(0.2);
            f.owner_sync_seq = SeqNum(rng.random_range(0..4));
            out.push(Child::File(f));
        }
    }
    out
}

/// A random `(current, provided, provider)` triple with at most 20 entries
/// on each side and at most four owners.
pub fn random_folder_pair<R: Rng>(rng: &mut R) -> (Vec<Child>, Vec<Child>, MemberName) {
    let provider = m(OWNERS[rng.random_range(0..OWNERS.len())]);
    let mut budget = 20;
    let current = random_children(rng, &mut budget, 0, None);
    let mut budget = 20;
    let provided = random_children(rng, &mut budget, 0, Some(&provider));
    (current, provided, provider)
}

fn provider_files<'a>(children: &'a [Child], provider: &MemberName) -> Vec<&'a FileEntry> {
    children.iter().filter_map(Child::as_file).filter(|f| &f.owner == provider).collect()
}

fn other_files<'a>(children: &'a [Child], provider: &MemberName) -> Vec<&'a FileEntry> {
    children.iter().filter_map(Child::as_file).filter(|f| &f.owner != provider).collect()
}

/// Rebuilds what a merged folder must contain from the two partitions and
/// compares. Returns a description of the first mismatch.
pub fn merge_oracle_mismatch(
    current: &[Child],
    provided: &[Child],
    provider: &MemberName,
    seq: SeqNum,
    merged: &[Child],
) -> Option<String> {
    // other owners' files: untouched, same relative order
    let want_others: Vec<FileEntry> = other_files(current, provider).into_iter().cloned().collect();
    let got_others: Vec<FileEntry> = other_files(merged, provider).into_iter().cloned().collect();
    if want_others != got_others {
        return Some(format!("other owners' files: want {want_others:?} got {got_others:?}"));
    }

    // provider's files: exactly what was provided, in order
    let ident = |f: &FileEntry| (f.logical_name.clone(), f.owner.clone(), f.physical_name.clone());
    let want_own: Vec<_> = provider_files(provided, provider).into_iter().map(ident).collect();
    let got_files = provider_files(merged, provider);
    let got_own: Vec<_> = got_files.iter().map(|f| ident(f)).collect();
    if want_own != got_own {
        return Some(format!("provider files: want {want_own:?} got {got_own:?}"));
    }
    if let Some(f) = got_files.iter().find(|f| f.owner_sync_seq != seq) {
        return Some(format!("{} not stamped with seq {seq:?}", f.logical_name));
    }
    // a file that was not already there arrives unflagged
    for f in &got_files {
        let existed = provider_files(current, provider).iter().any(|c| c.logical_name == f.logical_name);
        if !existed && f.conflicted {
            return Some(format!("new file {} arrived flagged", f.logical_name));
        }
    }

    // folders: every current one, then the provided newcomers, each merged recursively
    let mut want_folders: Vec<&str> = current.iter().filter_map(Child::as_folder).map(|f| f.name.as_str()).collect();
    for f in provided.iter().filter_map(Child::as_folder) {
        if !want_folders.contains(&f.name.as_str()) {
            want_folders.push(&f.name);
        }
    }
    let got_folders: Vec<&FolderNode> = merged.iter().filter_map(Child::as_folder).collect();
    let got_names: Vec<&str> = got_folders.iter().map(|f| f.name.as_str()).collect();
    if want_folders != got_names {
        return Some(format!("folders: want {want_folders:?} got {got_names:?}"));
    }
    for sub in got_folders {
        let pick = |side: &[Child]| -> Vec<Child> {
            side.iter().filter_map(Child::as_folder).find(|f| f.name == sub.name).map_or(Vec::new(), |f| f.children.clone())
        };
        if let Some(e) = merge_oracle_mismatch(&pick(current), &pick(provided), provider, seq, &sub.children) {
            return Some(format!("{}/{e}", sub.name));
        }
    }

    let expected_len = want_others.len() + want_own.len() + want_folders.len();
    if merged.len() != expected_len {
        return Some(format!("{} children, expected {expected_len}", merged.len()));
    }
    None
}

// ---- join trees ----

/// Every labelled tree on `n` vertices, as parent arrays rooted at 0.
pub fn all_labelled_trees(n: usize) -> Vec<Vec<Option<usize>>> {
    assert!(n >= 2);
    let mut out = Vec::new();
    let count = n.pow(n as u32 - 2);
    for code in 0..count {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        out.push(root_at_zero(n, &prufer_edges(n, &seq)));
    }
    out
}

fn prufer_edges(n: usize, seq: &[usize]) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::new();
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

fn root_at_zero(n: usize, edges: &[(usize, usize)]) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &(a, b) in edges {
            let v = if a == u { b } else if b == u { a } else { continue };
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    parent
}

/// Vertices in breadth-first order from the root.
pub fn bfs_order(parent: &[Option<usize>]) -> Vec<usize> {
    let mut order = vec![0];
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        order.extend((0..parent.len()).filter(|&v| parent[v] == Some(u)));
        i += 1;
    }
    order
}

/// Builds the scenario text that grows a membership along `parent`.
pub fn join_tree_scenario(parent: &[Option<usize>]) -> String {
    let mut s = String::from("0 spawn n0 A\n");
    for v in 1..parent.len() {
        s.push_str(&format!("0 spawn n{v}\n"));
    }
    for (i, v) in bfs_order(parent).into_iter().skip(1).enumerate() {
        let host = parent[v].unwrap();
        s.push_str(&format!("{} join n{v} n{host}\n", i));
    }
    s
}
