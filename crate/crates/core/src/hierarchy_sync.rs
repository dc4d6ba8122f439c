//! Hierarchy half of the sync protocol.
//!
//! A member only ever ships the part of its tree holding files it owns.
//! The receiver folds that projection into its own tree one folder at a
//! time with [`sync_folder`], which treats a folder's children as a list
//! and walks the current and provided lists with two cursors.

use std::collections::{HashMap, HashSet};

use crate::metadata::{Child, FileEntry, FolderNode, HierarchyTree, MemberName, SeqNum};

/// Suffix marker used to disambiguate conflicted files.
pub const CONFLICT_MARKER: &str = ".CONFLICT.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySyncRequest {
    pub requester_name: MemberName,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySyncReply {
    pub provider_name: MemberName,
    pub provider_hier_seq: SeqNum,
    /// Root folder holding only provider-owned files and their folders.
    pub owned_tree: FolderNode,
}

/// Flag changes produced by a conflict recomputation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConflictTransitions {
    pub flagged: usize,
    pub unflagged: usize,
}

impl ConflictTransitions {
    pub fn total(&self) -> usize {
        self.flagged + self.unflagged
    }
}

impl std::ops::AddAssign for ConflictTransitions {
    fn add_assign(&mut self, rhs: Self) {
        self.flagged += rhs.flagged;
        self.unflagged += rhs.unflagged;
    }
}

/// Projects `tree` onto the files owned by `owner`. Folders with no such
/// file underneath are pruned; child order is preserved.
pub fn build_owned_subtree(tree: &HierarchyTree, owner: &MemberName) -> FolderNode {
    project_folder(&tree.root, owner).unwrap_or_else(FolderNode::root)
}

fn project_folder(folder: &FolderNode, owner: &MemberName) -> Option<FolderNode> {
    let children: Vec<Child> = folder
        .children
        .iter()
        .filter_map(|child| match child {
            Child::File(f) if &f.owner == owner => Some(Child::File(FileEntry {
                conflicted: false,
                owner_sync_seq: SeqNum::ZERO,
                ..f.clone()
            })),
            Child::File(_) => None,
            Child::Folder(sub) => project_folder(sub, owner).map(Child::Folder),
        })
        .collect();
    (!children.is_empty()).then(|| FolderNode { name: folder.name.clone(), children })
}

/// Merges the provider's view of one folder into the current one.
///
/// Provider-owned files in `current` are compared, in order, against
/// `provided`: a name match keeps the current entry (refreshing what the
/// provider says about it), a mismatch drops the current entry and holds
/// the provided cursor. Whatever remains in `provided` once `current` runs
/// out is appended. Files of other owners are never touched. Every current
/// subfolder is recursed into, against the provided folder of the same
/// name or an empty one, so stale provider files deep in the tree go too.
pub fn sync_folder(current: &[Child], provided: &[Child], provider: &MemberName, seq: SeqNum) -> Vec<Child> {
    let provided_files: Vec<&FileEntry> = provided.iter().filter_map(Child::as_file).collect();
    let provided_folders: HashMap<&str, &FolderNode> =
        provided.iter().filter_map(Child::as_folder).map(|f| (f.name.as_str(), f)).collect();

    let mut out = Vec::with_capacity(current.len() + provided.len());
    let mut cursor = 0;
    let mut seen_folders = HashSet::new();

    for child in current {
        match child {
            Child::File(f) if &f.owner != provider => out.push(child.clone()),
            Child::File(f) => match provided_files.get(cursor) {
                Some(p) if p.logical_name == f.logical_name => {
                    out.push(Child::File(FileEntry {
                        physical_name: p.physical_name.clone(),
                        owner_sync_seq: seq,
                        ..f.clone()
                    }));
                    cursor += 1;
                }
                // mismatch or provided exhausted: the owner no longer has it here
                _ => {}
            },
            Child::Folder(sub) => {
                seen_folders.insert(sub.name.as_str());
                let provided_children = provided_folders.get(sub.name.as_str()).map_or(&[][..], |p| &p.children);
                out.push(Child::Folder(FolderNode {
                    name: sub.name.clone(),
                    children: sync_folder(&sub.children, provided_children, provider, seq),
                }));
            }
        }
    }

    let mut file_index = 0;
    for child in provided {
        match child {
            Child::File(f) => {
                if file_index >= cursor {
                    out.push(Child::File(FileEntry { conflicted: false, owner_sync_seq: seq, ..f.clone() }));
                }
                file_index += 1;
            }
            Child::Folder(sub) => {
                if seen_folders.insert(sub.name.as_str()) {
                    out.push(Child::Folder(FolderNode {
                        name: sub.name.clone(),
                        children: sync_folder(&[], &sub.children, provider, seq),
                    }));
                }
            }
        }
    }
    out
}

/// Applies a hierarchy sync reply. Returns whether the reply was applied;
/// stale replies, replies about ourselves and malformed trees are ignored.
pub fn apply_hierarchy_sync(tree: &mut HierarchyTree, rep: &HierarchySyncReply) -> bool {
    apply_hierarchy_sync_counted(tree, rep).is_some()
}

/// Like [`apply_hierarchy_sync`], also reporting conflict flag changes.
pub fn apply_hierarchy_sync_counted(tree: &mut HierarchyTree, rep: &HierarchySyncReply) -> Option<ConflictTransitions> {
    if tree.local() == Some(&rep.provider_name) {
        return None;
    }
    let known = tree.per_owner_seq(&rep.provider_name).unwrap_or(SeqNum::ZERO);
    if rep.provider_hier_seq <= known {
        return None;
    }
    if !is_valid_owned_tree(&rep.owned_tree, &rep.provider_name) {
        log::warn!("discarding malformed hierarchy from {}", rep.provider_name);
        return None;
    }
    tree.root.children =
        sync_folder(&tree.root.children, &rep.owned_tree.children, &rep.provider_name, rep.provider_hier_seq);
    let transitions = recompute_all_conflicts(&mut tree.root);
    tree.record_owner_seq(rep.provider_name.clone(), rep.provider_hier_seq);
    Some(transitions)
}

/// Checks the shape a provider's projection must have: only the
/// provider's files, valid names, unique folder names and unique file
/// names per folder.
pub fn is_valid_owned_tree(root: &FolderNode, provider: &MemberName) -> bool {
    fn valid_name(name: &str) -> bool {
        !name.is_empty() && name != "." && name != ".." && !name.contains('/')
    }
    fn check(folder: &FolderNode, provider: &MemberName) -> bool {
        let mut folders = HashSet::new();
        let mut files = HashSet::new();
        folder.children.iter().all(|child| match child {
            Child::File(f) => {
                &f.owner == provider
                    && valid_name(&f.logical_name)
                    && !f.physical_name.is_empty()
                    && files.insert(f.logical_name.as_str())
            }
            Child::Folder(sub) => valid_name(&sub.name) && folders.insert(sub.name.as_str()) && check(sub, provider),
        })
    }
    check(root, provider)
}

/// Recomputes conflict flags for the direct children of `folder`.
///
/// A file is conflicted when a sibling file with the same logical name has
/// a different owner, or when a sibling folder with files in it carries
/// that name. Folders left empty by deletions do not count.
pub fn recompute_conflicts(folder: &mut FolderNode) -> ConflictTransitions {
    let mut owners: HashMap<&str, HashSet<&MemberName>> = HashMap::new();
    let mut folder_names = HashSet::new();
    for child in &folder.children {
        match child {
            Child::File(f) => {
                owners.entry(&f.logical_name).or_default().insert(&f.owner);
            }
            Child::Folder(sub) if sub.holds_files() => {
                folder_names.insert(sub.name.as_str());
            }
            Child::Folder(_) => {}
        }
    }
    let wanted: Vec<bool> = folder
        .children
        .iter()
        .filter_map(Child::as_file)
        .map(|f| owners[f.logical_name.as_str()].len() > 1 || folder_names.contains(f.logical_name.as_str()))
        .collect();

    let mut transitions = ConflictTransitions::default();
    let files = folder.children.iter_mut().filter_map(|c| match c {
        Child::File(f) => Some(f),
        Child::Folder(_) => None,
    });
    for (file, conflicted) in files.zip(wanted) {
        match (file.conflicted, conflicted) {
            (false, true) => transitions.flagged += 1,
            (true, false) => transitions.unflagged += 1,
            _ => {}
        }
        file.conflicted = conflicted;
    }
    transitions
}

pub fn recompute_all_conflicts(root: &mut FolderNode) -> ConflictTransitions {
    let mut total = ConflictTransitions::default();
    root.walk_folders_mut(&mut |folder| total += recompute_conflicts(folder));
    total
}

/// The name a file is listed under. Conflicted files get the owner's name
/// appended, with separators replaced so the result stays one component.
pub fn display_name(entry: &FileEntry) -> String {
    if entry.conflicted {
        format!("{}{}{}", entry.logical_name, CONFLICT_MARKER, entry.owner.as_str().replace('/', "-"))
    } else {
        entry.logical_name.clone()
    }
}
