//! Per-owner blob store and the `mont` access handshake.
//!
//! Stands in for the network file system: an owner keeps file bytes keyed
//! by physical name and serves whole-blob reads and writes to members it
//! has granted access. Writes replace the blob, so the last write to reach
//! the owner is the one that remains.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metadata::{MemberList, MemberName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StorageError {
    #[error("requester has not been granted access")]
    NotGranted,
    #[error("no such blob")]
    NotFound,
    #[error("storage quota exceeded")]
    QuotaExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontRequest {
    pub requester_name: MemberName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MontStatus {
    Granted,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontReply {
    pub status: MontStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataRequest {
    Read { requester: MemberName, physical_name: String },
    Write { requester: MemberName, physical_name: String, bytes: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataResponse {
    Read(Vec<u8>),
    Written,
    Failed(StorageError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlobStore {
    blobs: BTreeMap<String, Vec<u8>>,
    quota: Option<u64>,
    granted: BTreeSet<MemberName>,
}

impl BlobStore {
    pub fn new(quota: Option<u64>) -> Self {
        BlobStore { quota, ..Default::default() }
    }

    pub fn quota(&self) -> Option<u64> {
        self.quota
    }

    pub fn used_bytes(&self) -> u64 {
        self.blobs.values().map(|b| b.len() as u64).sum()
    }

    pub fn contains(&self, physical_name: &str) -> bool {
        self.blobs.contains_key(physical_name)
    }

    pub fn blobs(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.blobs
    }

    pub fn granted(&self) -> &BTreeSet<MemberName> {
        &self.granted
    }

    pub fn is_granted(&self, member: &MemberName) -> bool {
        self.granted.contains(member)
    }

    /// Creates an empty blob. A full store (usage at or over quota) cannot
    /// take new files. Creating an existing blob is a no-op.
    pub fn create(&mut self, physical_name: &str) -> Result<(), StorageError> {
        if self.blobs.contains_key(physical_name) {
            return Ok(());
        }
        if self.quota.is_some_and(|q| self.used_bytes() >= q) {
            return Err(StorageError::QuotaExceeded);
        }
        self.blobs.insert(physical_name.to_string(), Vec::new());
        Ok(())
    }

    pub fn remove(&mut self, physical_name: &str) -> Option<Vec<u8>> {
        self.blobs.remove(physical_name)
    }

    pub fn read(&self, physical_name: &str) -> Result<Vec<u8>, StorageError> {
        self.blobs.get(physical_name).cloned().ok_or(StorageError::NotFound)
    }

    /// Replaces a blob's contents. The blob must exist.
    pub fn write(&mut self, physical_name: &str, bytes: Vec<u8>) -> Result<(), StorageError> {
        let current = self.blobs.get(physical_name).ok_or(StorageError::NotFound)?.len() as u64;
        if let Some(quota) = self.quota {
            if self.used_bytes() - current + bytes.len() as u64 > quota {
                return Err(StorageError::QuotaExceeded);
            }
        }
        self.blobs.insert(physical_name.to_string(), bytes);
        Ok(())
    }

    pub fn remote_read(&self, requester: &MemberName, physical_name: &str) -> Result<Vec<u8>, StorageError> {
        if !self.is_granted(requester) {
            return Err(StorageError::NotGranted);
        }
        self.read(physical_name)
    }

    pub fn remote_write(&mut self, requester: &MemberName, physical_name: &str, bytes: Vec<u8>) -> Result<(), StorageError> {
        if !self.is_granted(requester) {
            return Err(StorageError::NotGranted);
        }
        self.write(physical_name, bytes)
    }

    pub fn handle_data_request(&mut self, req: &DataRequest) -> DataResponse {
        match req {
            DataRequest::Read { requester, physical_name } => match self.remote_read(requester, physical_name) {
                Ok(bytes) => DataResponse::Read(bytes),
                Err(e) => DataResponse::Failed(e),
            },
            DataRequest::Write { requester, physical_name, bytes } => {
                match self.remote_write(requester, physical_name, bytes.clone()) {
                    Ok(()) => DataResponse::Written,
                    Err(e) => DataResponse::Failed(e),
                }
            }
        }
    }
}

/// Grants a known member access to this owner's blobs. Unknown members get
/// no reply at all.
pub fn handle_mont_request(store: &mut BlobStore, members: &MemberList, req: &MontRequest) -> Option<MontReply> {
    if !members.contains(&req.requester_name) {
        return None;
    }
    store.granted.insert(req.requester_name.clone());
    Some(MontReply { status: MontStatus::Granted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::{MemberRecord, NodeId};

    fn m(s: &str) -> MemberName {
        MemberName::new(s).unwrap()
    }

    fn members() -> MemberList {
        let mut l = MemberList::new();
        l.add(MemberRecord::new(m("A"), NodeId(0), 7000));
        l.add(MemberRecord::new(m("A/1"), NodeId(1), 7000));
        l
    }

    #[test]
    fn mont_grants_known_members_only() {
        let mut store = BlobStore::new(None);
        let l = members();
        let req = MontRequest { requester_name: m("A/1") };
        assert_eq!(handle_mont_request(&mut store, &l, &req).unwrap().status, MontStatus::Granted);
        assert_eq!(handle_mont_request(&mut store, &l, &req).unwrap().status, MontStatus::Granted);
        assert_eq!(store.granted().len(), 1);
        assert!(handle_mont_request(&mut store, &l, &MontRequest { requester_name: m("X") }).is_none());
        assert!(!store.is_granted(&m("X")));
    }

    #[test]
    fn remote_round_trip_and_last_writer_wins() {
        let mut store = BlobStore::new(None);
        store.create("0_a").unwrap();
        handle_mont_request(&mut store, &members(), &MontRequest { requester_name: m("A/1") });
        store.remote_write(&m("A/1"), "0_a", b"first".to_vec()).unwrap();
        store.remote_write(&m("A/1"), "0_a", b"second".to_vec()).unwrap();
        assert_eq!(store.remote_read(&m("A/1"), "0_a").unwrap(), b"second");
        assert_eq!(store.remote_read(&m("A/1"), "nope"), Err(StorageError::NotFound));
        assert_eq!(store.remote_read(&m("A"), "0_a"), Err(StorageError::NotGranted));
    }

    #[test]
    fn quota_boundaries() {
        let mut store = BlobStore::new(Some(4));
        store.create("x").unwrap();
        store.write("x", b"1234".to_vec()).unwrap();
        assert_eq!(store.write("x", b"12345".to_vec()), Err(StorageError::QuotaExceeded));
        assert_eq!(store.read("x").unwrap(), b"1234");
        assert_eq!(store.create("y"), Err(StorageError::QuotaExceeded));
        assert!(BlobStore::new(Some(0)).create("z").is_err());
    }
}
