//! A metadata layer for a distributed file system spread over edge devices,
//! run on a deterministic simulated network.
//!
//! Each member owns the files it stores and is the only one allowed to
//! change their metadata. Everyone else learns about those files by pulling
//! the owner's subtree when a ping advertises a newer sequence number, and
//! hides them while the owner is out of reach.

pub mod fileops;
pub mod hierarchy_sync;
pub mod membership;
pub mod metadata;
pub mod node;
pub mod reachability;
pub mod scenario;
pub mod simnet;
pub mod storage;
