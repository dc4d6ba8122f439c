//! File operations and the `freq` protocol.
//!
//! Only a file's owner mutates its metadata. A requesting member resolves
//! the display path to a logical one, routes the request to the owner (or
//! picks an owner for a new file) and blocks until the owner answers.

use rand::Rng;
use thiserror::Error;

use crate::hierarchy_sync::{display_name, ConflictTransitions};
use crate::metadata::{
    join_path, split_parent, split_path, FileEntry, FolderNode, HierarchyTree, MemberList, MemberName,
    MetadataError, SEPARATOR,
};
use crate::reachability::owner_visible;
use crate::storage::{BlobStore, StorageError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileOp {
    Add,
    Delete,
    Rename { new_name: String },
}

impl FileOp {
    pub fn label(&self) -> &'static str {
        match self {
            FileOp::Add => "add",
            FileOp::Delete => "delete",
            FileOp::Rename { .. } => "rename",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRequest {
    pub op: FileOp,
    /// Logical path: folder path plus the file's logical name.
    pub path: String,
    pub requester: MemberName,
}

/// Error codes an owner can answer a file request with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum ErrorCode {
    #[error("name-conflict")]
    NameConflict,
    #[error("invalid-path")]
    InvalidPath,
    #[error("not-owner")]
    NotOwner,
    #[error("no-memory")]
    NoMemory,
    #[error("timeout")]
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileResponse {
    pub status: Result<(), ErrorCode>,
}

impl FileResponse {
    pub fn success() -> Self {
        FileResponse { status: Ok(()) }
    }

    pub fn error(code: ErrorCode) -> Self {
        FileResponse { status: Err(code) }
    }
}

/// Outcome of a local operation as seen by whoever issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("{0}")]
    Owner(#[from] ErrorCode),
    #[error("not-found")]
    NotFound,
    #[error("owner-unreachable")]
    OwnerUnreachable,
    #[error("not-joined")]
    NotJoined,
    #[error("storage: {0}")]
    Storage(#[from] StorageError),
}

impl OpError {
    pub const TIMEOUT: OpError = OpError::Owner(ErrorCode::Timeout);
}

/// One entry of a folder listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Listing {
    Folder(String),
    File { display_name: String, owner: MemberName },
}

impl Listing {
    pub fn name(&self) -> &str {
        match self {
            Listing::Folder(n) => n,
            Listing::File { display_name, .. } => display_name,
        }
    }
}

/// Lists the visible contents of a folder: every subfolder, and every
/// file whose owner is local or reachable.
pub fn list_folder(tree: &HierarchyTree, members: &MemberList, path: &str) -> Result<Vec<Listing>, OpError> {
    let components = split_path(path).map_err(|_| ErrorCode::InvalidPath)?;
    let folder = tree.folder(&components).ok_or(OpError::NotFound)?;
    Ok(folder
        .children
        .iter()
        .filter_map(|child| match child {
            crate::metadata::Child::Folder(f) => Some(Listing::Folder(f.name.clone())),
            crate::metadata::Child::File(f) => owner_visible(members, tree.local(), &f.owner)
                .then(|| Listing::File { display_name: display_name(f), owner: f.owner.clone() }),
        })
        .collect())
}

fn visible_name_taken(folder: &FolderNode, tree: &HierarchyTree, members: &MemberList, name: &str) -> bool {
    folder.folder(name).is_some()
        || folder
            .files()
            .any(|f| owner_visible(members, tree.local(), &f.owner) && display_name(f) == name)
}

/// The requester's pre-flight check for a create: the path must be valid
/// and no visible sibling may already be listed under that name.
pub fn check_create(tree: &HierarchyTree, members: &MemberList, path: &str) -> Result<(), OpError> {
    let (folder_path, name) = split_parent(path).map_err(|_| ErrorCode::InvalidPath)?;
    let components = split_path(&folder_path).map_err(|_| ErrorCode::InvalidPath)?;
    match tree.folder(&components) {
        Some(folder) if visible_name_taken(folder, tree, members, &name) => Err(ErrorCode::NameConflict.into()),
        _ => Ok(()),
    }
}

/// Picks a new file's owner uniformly among reachable members, self
/// included, in member-list order.
pub fn choose_owner<R: Rng + ?Sized>(members: &MemberList, local: &MemberName, rng: &mut R) -> MemberName {
    let candidates: Vec<&MemberName> = members
        .iter()
        .filter(|r| &r.name == local || r.reachable)
        .map(|r| &r.name)
        .collect();
    if candidates.is_empty() {
        return local.clone();
    }
    candidates[rng.random_range(0..candidates.len())].clone()
}

/// Resolves a visible display path to the owner and logical path to send
/// a delete or rename to.
pub fn route(tree: &HierarchyTree, members: &MemberList, path: &str) -> Result<(MemberName, String), OpError> {
    let (folder_path, _) = split_parent(path).map_err(|_| ErrorCode::InvalidPath)?;
    let entry = tree.lookup_file(path).map_err(|_| OpError::NotFound)?;
    if !owner_visible(members, tree.local(), &entry.owner) {
        return Err(OpError::NotFound);
    }
    Ok((entry.owner.clone(), join_path(&folder_path, &entry.logical_name)))
}

/// Translates a visible display path into `(owner, physical name)`.
pub fn resolve_open(tree: &HierarchyTree, members: &MemberList, path: &str) -> Result<(MemberName, String), OpError> {
    let entry = tree.lookup_file(path).map_err(|_| OpError::NotFound)?;
    if !owner_visible(members, tree.local(), &entry.owner) {
        return Err(OpError::OwnerUnreachable);
    }
    Ok((entry.owner.clone(), entry.physical_name.clone()))
}

/// Owner side of `freq`. Every step runs locally; nothing here waits on
/// another member. Replaying a request right after itself is a no-op.
pub fn handle_file_request(
    tree: &mut HierarchyTree,
    store: &mut BlobStore,
    members: &MemberList,
    req: &FileRequest,
) -> (FileResponse, ConflictTransitions) {
    let Some(local) = tree.local().cloned() else {
        return (FileResponse::error(ErrorCode::NotOwner), ConflictTransitions::default());
    };
    let before = conflict_snapshot(tree);
    let status = match &req.op {
        FileOp::Add => owner_add(tree, store, members, &local, &req.path),
        FileOp::Delete => owner_delete(tree, store, &local, &req.path),
        FileOp::Rename { new_name } => owner_rename(tree, members, &local, &req.path, new_name),
    };
    (FileResponse { status }, conflict_delta(&before, &conflict_snapshot(tree)))
}

fn parse_target(path: &str) -> Result<(String, String, Vec<String>), ErrorCode> {
    let (folder_path, name) = split_parent(path).map_err(|_| ErrorCode::InvalidPath)?;
    let components = split_path(&folder_path)
        .map_err(|_| ErrorCode::InvalidPath)?
        .into_iter()
        .map(str::to_string)
        .collect();
    Ok((folder_path, name, components))
}

fn owner_add(
    tree: &mut HierarchyTree,
    store: &mut BlobStore,
    members: &MemberList,
    local: &MemberName,
    path: &str,
) -> Result<(), ErrorCode> {
    let (folder_path, name, components) = parse_target(path)?;
    let components: Vec<&str> = components.iter().map(String::as_str).collect();
    if let Some(folder) = tree.folder(&components) {
        if folder.file(&name, local).is_some() {
            return Ok(());
        }
        let taken = folder.folder(&name).is_some()
            || folder
                .files()
                .any(|f| f.logical_name == name && owner_visible(members, Some(local), &f.owner));
        if taken {
            return Err(ErrorCode::NameConflict);
        }
    }
    let physical_name = format!("{}_{}", tree.own_seq(), name);
    // intermediate components must not be files; check before touching storage
    {
        let mut folder = &tree.root;
        for component in &components {
            if folder.files().any(|f| f.logical_name == *component) {
                return Err(ErrorCode::InvalidPath);
            }
            match folder.folder(component) {
                Some(sub) => folder = sub,
                None => break,
            }
        }
    }
    store.create(&physical_name).map_err(|_| ErrorCode::NoMemory)?;
    match tree.insert_entry(&folder_path, FileEntry::new(name, local.clone(), physical_name.clone())) {
        Ok(()) => Ok(()),
        Err(e) => {
            store.remove(&physical_name);
            Err(match e {
                MetadataError::Duplicate { .. } | MetadataError::Collision(_) => ErrorCode::NameConflict,
                _ => ErrorCode::InvalidPath,
            })
        }
    }
}

fn owner_delete(tree: &mut HierarchyTree, store: &mut BlobStore, local: &MemberName, path: &str) -> Result<(), ErrorCode> {
    let (folder_path, name, components) = parse_target(path)?;
    let components: Vec<&str> = components.iter().map(String::as_str).collect();
    let Some(folder) = tree.folder(&components) else {
        return Ok(());
    };
    match folder.file(&name, local) {
        Some(entry) => {
            let physical = entry.physical_name.clone();
            tree.remove_entry(&folder_path, &name, local).map_err(|_| ErrorCode::InvalidPath)?;
            store.remove(&physical);
            Ok(())
        }
        None if folder.files().any(|f| f.logical_name == name) => Err(ErrorCode::NotOwner),
        None => Ok(()),
    }
}

fn owner_rename(
    tree: &mut HierarchyTree,
    members: &MemberList,
    local: &MemberName,
    path: &str,
    new_name: &str,
) -> Result<(), ErrorCode> {
    let (folder_path, name, components) = parse_target(path)?;
    if new_name.contains(SEPARATOR) || split_path(&join_path(&folder_path, new_name)).is_err() {
        return Err(ErrorCode::InvalidPath);
    }
    let components: Vec<&str> = components.iter().map(String::as_str).collect();
    let folder = tree.folder(&components).ok_or(ErrorCode::InvalidPath)?;
    if folder.file(&name, local).is_some() {
        if name == new_name {
            return Ok(());
        }
        let taken = folder.folder(new_name).is_some()
            || folder
                .files()
                .any(|f| f.logical_name == new_name && owner_visible(members, Some(local), &f.owner));
        if taken {
            return Err(ErrorCode::NameConflict);
        }
        return tree
            .rename_entry(&folder_path, &name, local, new_name)
            .map_err(|e| match e {
                MetadataError::InvalidName(_) => ErrorCode::InvalidPath,
                _ => ErrorCode::NameConflict,
            });
    }
    if folder.file(new_name, local).is_some() {
        // already applied
        return Ok(());
    }
    if folder.files().any(|f| f.logical_name == name) {
        return Err(ErrorCode::NotOwner);
    }
    Err(ErrorCode::InvalidPath)
}

fn conflict_snapshot(tree: &HierarchyTree) -> Vec<(String, String, MemberName, bool)> {
    tree.files()
        .into_iter()
        .map(|(p, f)| (p, f.logical_name.clone(), f.owner.clone(), f.conflicted))
        .collect()
}

fn conflict_delta(
    before: &[(String, String, MemberName, bool)],
    after: &[(String, String, MemberName, bool)],
) -> ConflictTransitions {
    let was: std::collections::HashMap<_, _> = before.iter().map(|(p, n, o, c)| ((p, n, o), *c)).collect();
    let mut t = ConflictTransitions::default();
    for (p, n, o, c) in after {
        let old = was.get(&(p, n, o)).copied().unwrap_or(false);
        match (old, *c) {
            (false, true) => t.flagged += 1,
            (true, false) => t.unflagged += 1,
            _ => {}
        }
    }
    let now: std::collections::HashSet<_> = after.iter().map(|(p, n, o, _)| (p, n, o)).collect();
    t.unflagged += before.iter().filter(|(p, n, o, c)| *c && !now.contains(&(p, n, o))).count();
    t
}
