//! Shared domain types for members and the logical hierarchy.
//!
//! Nothing in here talks to the network. Members are identified by a
//! hierarchical [`MemberName`]; the logical hierarchy is a tree of
//! [`FolderNode`]s whose leaves are [`FileEntry`]s, each pointing at the
//! member that physically stores it.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::hierarchy_sync::{display_name, recompute_conflicts};

/// Path separator, also the name of the root folder.
pub const SEPARATOR: &str = "/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetadataError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid name: {0:?}")]
    InvalidName(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate entry {name} owned by {owner}")]
    Duplicate { name: String, owner: MemberName },
    #[error("name collision between file and folder: {0}")]
    Collision(String),
}

pub type Result<T, E = MetadataError> = std::result::Result<T, E>;

/// Identifier of a node on the simulated network (its "address").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Version counter for member lists and owned subtrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeqNum(pub u64);

impl SeqNum {
    pub const ZERO: SeqNum = SeqNum(0);

    pub fn next(self) -> SeqNum {
        SeqNum(self.0 + 1)
    }
}

impl fmt::Display for SeqNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A member's system-wide unique name.
///
/// Names are hierarchical: a host names a newcomer by appending
/// `/<suffix>` to its own name, so the host's name is always a strict
/// prefix of everything it hands out.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberName(String);

impl MemberName {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(MetadataError::InvalidName(name));
        }
        Ok(MemberName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The name a host with this name gives its `suffix`-th newcomer.
    pub fn child(&self, suffix: u64) -> MemberName {
        MemberName(format!("{}{}{}", self.0, SEPARATOR, suffix))
    }

    /// True when `self` is a strict, separator-aligned prefix of `other`.
    pub fn is_strict_prefix_of(&self, other: &MemberName) -> bool {
        other.0.len() > self.0.len() + 1
            && other.0.starts_with(&self.0)
            && other.0[self.0.len()..].starts_with(SEPARATOR)
    }
}

impl std::str::FromStr for MemberName {
    type Err = MetadataError;

    fn from_str(s: &str) -> Result<Self> {
        MemberName::new(s)
    }
}

impl fmt::Display for MemberName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberRecord {
    pub name: MemberName,
    pub address: NodeId,
    pub port: u16,
    pub reachable: bool,
    pub missed_pings: u32,
    /// Last member-list sequence number heard from this member.
    pub known_member_seq: SeqNum,
    /// Last hierarchy sequence number heard from this member.
    pub known_hier_seq: SeqNum,
}

impl MemberRecord {
    pub fn new(name: MemberName, address: NodeId, port: u16) -> Self {
        MemberRecord {
            name,
            address,
            port,
            reachable: true,
            missed_pings: 0,
            known_member_seq: SeqNum::ZERO,
            known_hier_seq: SeqNum::ZERO,
        }
    }
}

/// Sequence-numbered membership view. Entries are never removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemberList {
    entries: Vec<MemberRecord>,
    seq: SeqNum,
}

impl MemberList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seq(&self) -> SeqNum {
        self.seq
    }

    /// Appends `record` unless its name is already present. The sequence
    /// number moves only when an entry is actually added.
    pub fn add(&mut self, record: MemberRecord) -> bool {
        if self.contains(&record.name) {
            return false;
        }
        self.entries.push(record);
        self.seq = self.seq.next();
        true
    }

    pub fn contains(&self, name: &MemberName) -> bool {
        self.entries.iter().any(|r| &r.name == name)
    }

    pub fn get(&self, name: &MemberName) -> Option<&MemberRecord> {
        self.entries.iter().find(|r| &r.name == name)
    }

    pub fn get_mut(&mut self, name: &MemberName) -> Option<&mut MemberRecord> {
        self.entries.iter_mut().find(|r| &r.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemberRecord> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut MemberRecord> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &MemberName> {
        self.entries.iter().map(|r| &r.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub logical_name: String,
    pub owner: MemberName,
    pub physical_name: String,
    pub conflicted: bool,
    /// Sequence number of the sync that last confirmed this entry.
    pub owner_sync_seq: SeqNum,
}

impl FileEntry {
    pub fn new(logical_name: impl Into<String>, owner: MemberName, physical_name: impl Into<String>) -> Self {
        FileEntry {
            logical_name: logical_name.into(),
            owner,
            physical_name: physical_name.into(),
            conflicted: false,
            owner_sync_seq: SeqNum::ZERO,
        }
    }

    /// Same file identity: name, owner and physical location.
    pub fn same_identity(&self, other: &FileEntry) -> bool {
        self.logical_name == other.logical_name
            && self.owner == other.owner
            && self.physical_name == other.physical_name
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Child {
    Folder(FolderNode),
    File(FileEntry),
}

impl Child {
    pub fn as_file(&self) -> Option<&FileEntry> {
        match self {
            Child::File(f) => Some(f),
            Child::Folder(_) => None,
        }
    }

    pub fn as_folder(&self) -> Option<&FolderNode> {
        match self {
            Child::Folder(f) => Some(f),
            Child::File(_) => None,
        }
    }
}

/// A folder. Children keep insertion order; the folder merge relies on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FolderNode {
    pub name: String,
    pub children: Vec<Child>,
}

impl FolderNode {
    pub fn new(name: impl Into<String>) -> Self {
        FolderNode { name: name.into(), children: Vec::new() }
    }

    pub fn root() -> Self {
        FolderNode::new(SEPARATOR)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.children.iter().filter_map(Child::as_file)
    }

    pub fn folders(&self) -> impl Iterator<Item = &FolderNode> {
        self.children.iter().filter_map(Child::as_folder)
    }

    pub fn folder(&self, name: &str) -> Option<&FolderNode> {
        self.folders().find(|f| f.name == name)
    }

    pub fn folder_mut(&mut self, name: &str) -> Option<&mut FolderNode> {
        self.children.iter_mut().find_map(|c| match c {
            Child::Folder(f) if f.name == name => Some(f),
            _ => None,
        })
    }

    /// Returns the named subfolder, appending it first if absent.
    pub fn folder_or_insert(&mut self, name: &str) -> &mut FolderNode {
        let idx = match self
            .children
            .iter()
            .position(|c| matches!(c, Child::Folder(f) if f.name == name))
        {
            Some(idx) => idx,
            None => {
                self.children.push(Child::Folder(FolderNode::new(name)));
                self.children.len() - 1
            }
        };
        match &mut self.children[idx] {
            Child::Folder(f) => f,
            Child::File(_) => unreachable!(),
        }
    }

    pub fn file(&self, logical_name: &str, owner: &MemberName) -> Option<&FileEntry> {
        self.files().find(|f| f.logical_name == logical_name && &f.owner == owner)
    }

    pub fn file_mut(&mut self, logical_name: &str, owner: &MemberName) -> Option<&mut FileEntry> {
        self.children.iter_mut().find_map(|c| match c {
            Child::File(f) if f.logical_name == logical_name && &f.owner == owner => Some(f),
            _ => None,
        })
    }

    pub fn file_by_display(&self, display: &str) -> Option<&FileEntry> {
        self.files().find(|f| display_name(f) == display)
    }

    /// Removes the file with this `(logical_name, owner)`, if any.
    pub fn remove_file(&mut self, logical_name: &str, owner: &MemberName) -> Option<FileEntry> {
        let idx = self.children.iter().position(
            |c| matches!(c, Child::File(f) if f.logical_name == logical_name && &f.owner == owner),
        )?;
        match self.children.remove(idx) {
            Child::File(f) => Some(f),
            Child::Folder(_) => unreachable!(),
        }
    }

    /// Depth-first walk over every file, with the slash path of its folder.
    pub fn walk_files<'a>(&'a self, folder_path: &str, visit: &mut dyn FnMut(&str, &'a FileEntry)) {
        for child in &self.children {
            match child {
                Child::File(f) => visit(folder_path, f),
                Child::Folder(sub) => sub.walk_files(&join_path(folder_path, &sub.name), visit),
            }
        }
    }

    /// Depth-first walk over this folder and every descendant folder.
    pub fn walk_folders_mut(&mut self, visit: &mut dyn FnMut(&mut FolderNode)) {
        visit(self);
        for child in &mut self.children {
            if let Child::Folder(sub) = child {
                sub.walk_folders_mut(visit);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    /// True if any file sits in this folder or below it.
    pub fn holds_files(&self) -> bool {
        self.children.iter().any(|c| match c {
            Child::File(_) => true,
            Child::Folder(sub) => sub.holds_files(),
        })
    }
}

/// A reference to whatever a path resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry<'a> {
    Folder(&'a FolderNode),
    File(&'a FileEntry),
}

/// The local member's view of the logical hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyTree {
    pub root: FolderNode,
    own_seq: SeqNum,
    per_owner_seq: BTreeMap<MemberName, SeqNum>,
    local: Option<MemberName>,
}

impl Default for HierarchyTree {
    fn default() -> Self {
        HierarchyTree {
            root: FolderNode::root(),
            own_seq: SeqNum::ZERO,
            per_owner_seq: BTreeMap::new(),
            local: None,
        }
    }
}

impl HierarchyTree {
    pub fn new(local: MemberName) -> Self {
        HierarchyTree { local: Some(local), ..Default::default() }
    }

    pub fn local(&self) -> Option<&MemberName> {
        self.local.as_ref()
    }

    pub fn set_local(&mut self, local: MemberName) {
        self.local = Some(local);
    }

    pub fn own_seq(&self) -> SeqNum {
        self.own_seq
    }

    pub fn per_owner_seq(&self, owner: &MemberName) -> Option<SeqNum> {
        self.per_owner_seq.get(owner).copied()
    }

    pub fn per_owner_seqs(&self) -> &BTreeMap<MemberName, SeqNum> {
        &self.per_owner_seq
    }

    /// Records a newer per-owner sequence number; never moves backwards.
    pub fn record_owner_seq(&mut self, owner: MemberName, seq: SeqNum) {
        let slot = self.per_owner_seq.entry(owner).or_insert(seq);
        if seq > *slot {
            *slot = seq;
        }
    }

    fn is_local(&self, owner: &MemberName) -> bool {
        self.local.as_ref() == Some(owner)
    }

    fn bump_if_local(&mut self, owner: &MemberName) {
        if self.is_local(owner) {
            self.own_seq = self.own_seq.next();
        }
    }

    pub fn lookup(&self, path: &str) -> Result<Entry<'_>> {
        let components = split_path(path)?;
        let Some((last, dirs)) = components.split_last() else {
            return Ok(Entry::Folder(&self.root));
        };
        let mut folder = &self.root;
        for dir in dirs {
            folder = folder
                .folder(dir)
                .ok_or_else(|| MetadataError::NotFound(path.to_string()))?;
        }
        if let Some(file) = folder.file_by_display(last) {
            return Ok(Entry::File(file));
        }
        folder
            .folder(last)
            .map(Entry::Folder)
            .ok_or_else(|| MetadataError::NotFound(path.to_string()))
    }

    pub fn lookup_file(&self, path: &str) -> Result<&FileEntry> {
        match self.lookup(path)? {
            Entry::File(f) => Ok(f),
            Entry::Folder(_) => Err(MetadataError::NotFound(path.to_string())),
        }
    }

    pub fn folder(&self, components: &[&str]) -> Option<&FolderNode> {
        components.iter().try_fold(&self.root, |folder, name| folder.folder(name))
    }

    pub fn folder_mut(&mut self, components: &[&str]) -> Option<&mut FolderNode> {
        let mut folder = &mut self.root;
        for name in components {
            folder = folder.folder_mut(name)?;
        }
        Some(folder)
    }

    /// Walks to `components`, creating missing folders. Fails when a
    /// component names an existing file.
    fn folder_or_create(&mut self, components: &[&str]) -> Result<&mut FolderNode> {
        let mut folder = &mut self.root;
        for name in components {
            if folder.files().any(|f| f.logical_name == *name) {
                return Err(MetadataError::Collision((*name).to_string()));
            }
            folder = folder.folder_or_insert(name);
        }
        Ok(folder)
    }

    /// Appends `entry` to the folder at `folder_path`, creating
    /// intermediate folders as needed.
    pub fn insert_entry(&mut self, folder_path: &str, entry: FileEntry) -> Result<()> {
        validate_component(&entry.logical_name)?;
        let components = split_path(folder_path)?;
        let folder = self.folder_or_create(&components)?;
        if folder.file(&entry.logical_name, &entry.owner).is_some() {
            return Err(MetadataError::Duplicate { name: entry.logical_name, owner: entry.owner });
        }
        if folder.folder(&entry.logical_name).is_some() {
            return Err(MetadataError::Collision(entry.logical_name));
        }
        let owner = entry.owner.clone();
        folder.children.push(Child::File(entry));
        recompute_conflicts(folder);
        self.bump_if_local(&owner);
        Ok(())
    }

    /// Removes a file by its logical identity.
    pub fn remove_entry(&mut self, folder_path: &str, logical_name: &str, owner: &MemberName) -> Result<FileEntry> {
        let components = split_path(folder_path)?;
        let folder = self
            .folder_mut(&components)
            .ok_or_else(|| MetadataError::NotFound(folder_path.to_string()))?;
        let removed = folder
            .remove_file(logical_name, owner)
            .ok_or_else(|| MetadataError::NotFound(join_path(folder_path, logical_name)))?;
        recompute_conflicts(folder);
        self.bump_if_local(owner);
        Ok(removed)
    }

    /// Changes a file's logical name in place. The physical name is kept.
    pub fn rename_entry(
        &mut self,
        folder_path: &str,
        logical_name: &str,
        owner: &MemberName,
        new_name: &str,
    ) -> Result<()> {
        validate_component(new_name)?;
        let components = split_path(folder_path)?;
        let folder = self
            .folder_mut(&components)
            .ok_or_else(|| MetadataError::NotFound(folder_path.to_string()))?;
        if logical_name == new_name {
            return match folder.file(logical_name, owner) {
                Some(_) => Ok(()),
                None => Err(MetadataError::NotFound(join_path(folder_path, logical_name))),
            };
        }
        if folder.file(new_name, owner).is_some() {
            return Err(MetadataError::Duplicate { name: new_name.to_string(), owner: owner.clone() });
        }
        if folder.folder(new_name).is_some() {
            return Err(MetadataError::Collision(new_name.to_string()));
        }
        let file = folder
            .file_mut(logical_name, owner)
            .ok_or_else(|| MetadataError::NotFound(join_path(folder_path, logical_name)))?;
        file.logical_name = new_name.to_string();
        recompute_conflicts(folder);
        self.bump_if_local(owner);
        Ok(())
    }

    /// Every file in the tree with the path of its containing folder.
    pub fn files(&self) -> Vec<(String, &FileEntry)> {
        let mut out = Vec::new();
        self.root.walk_files(SEPARATOR, &mut |path, f| out.push((path.to_string(), f)));
        out
    }
}

/// Splits an absolute path into components. `"/"` yields no components.
pub fn split_path(path: &str) -> Result<Vec<&str>> {
    let Some(rest) = path.strip_prefix(SEPARATOR) else {
        return Err(MetadataError::InvalidPath(path.to_string()));
    };
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    rest.split(SEPARATOR)
        .map(|c| validate_component(c).map(|()| c).map_err(|_| MetadataError::InvalidPath(path.to_string())))
        .collect()
}

/// Splits a path into its parent folder path and final component.
pub fn split_parent(path: &str) -> Result<(String, String)> {
    let mut components = split_path(path)?;
    let last = components.pop().ok_or_else(|| MetadataError::InvalidPath(path.to_string()))?;
    Ok((format!("{}{}", SEPARATOR, components.join(SEPARATOR)), last.to_string()))
}

pub fn join_path(folder: &str, name: &str) -> String {
    if folder == SEPARATOR {
        format!("{SEPARATOR}{name}")
    } else {
        format!("{folder}{SEPARATOR}{name}")
    }
}

fn validate_component(name: &str) -> Result<()> {
    if name.is_empty() || name == "." || name == ".." || name.contains(SEPARATOR) {
        return Err(MetadataError::InvalidName(name.to_string()));
    }
    Ok(())
}
