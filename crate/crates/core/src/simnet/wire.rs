//! Byte layout of protocol messages.
//!
//! Every frame starts with the four ASCII bytes of its protocol tag. The
//! body that follows is a sequence of fields:
//!
//! * `u8`: one byte, used for kind discriminators and status codes
//! * `u64`: eight bytes, big-endian
//! * `str`: `u64` byte length followed by UTF-8 bytes
//! * `bytes`: `u64` length followed by raw bytes
//!
//! | tag    | kind | body |
//! |--------|------|------|
//! | `name` | 0 request | `str` placeholder, `u64` address, `u64` port |
//! | `name` | 1 reply   | `str` assigned name, `str` host name |
//! | `ping` | -         | `str` sender, `u64` member seq, `u64` hierarchy seq |
//! | `sync` | 0 member request   | `str` requester |
//! | `sync` | 1 member reply     | `str` provider, `u64` seq, `u64` n, n × (`str` name, `u64` address, `u64` port) |
//! | `sync` | 2 hierarchy request | `str` requester |
//! | `sync` | 3 hierarchy reply   | `str` provider, `u64` seq, folder |
//! | `mont` | 0 request  | `u64` call id, `str` requester |
//! | `mont` | 1 reply    | `u64` call id, `u8` status (0 granted, 1 ignored) |
//! | `freq` | 0 request  | `u64` call id, `u8` op (0 add, 1 delete, 2 rename), `str` path, [`str` new name], `str` requester |
//! | `freq` | 1 response | `u64` call id, `u8` status (0 ok, 1 name-conflict, 2 invalid-path, 3 not-owner, 4 no-memory, 5 timeout) |
//! | `data` | 0 request  | `u64` call id, `u8` op (0 read, 1 write), `str` requester, `str` physical name, [`bytes` content] |
//! | `data` | 1 response | `u64` call id, `u8` kind (0 read + `bytes`, 1 written, 2 failed + `u8` error: 0 not-granted, 1 not-found, 2 quota) |
//!
//! A folder is `str` name, `u64` child count, then each child as `u8` 0 and
//! a folder, or `u8` 1 and a file: `str` logical name, `str` owner, `str`
//! physical name. Trailing bytes make a frame invalid.

use std::fmt;

use thiserror::Error;

use crate::fileops::{ErrorCode, FileOp, FileRequest, FileResponse};
use crate::hierarchy_sync::{HierarchySyncReply, HierarchySyncRequest};
use crate::membership::{MemberInfo, MemberSyncReply, MemberSyncRequest, NameReply, NameRequest};
use crate::metadata::{Child, FileEntry, FolderNode, MemberName, NodeId, SeqNum};
use crate::reachability::PingMessage;
use crate::storage::{DataRequest, DataResponse, MontReply, MontRequest, MontStatus, StorageError};

/// Deepest folder nesting accepted when decoding.
const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Name,
    Ping,
    Sync,
    Mont,
    Freq,
    Data,
}

impl Tag {
    pub const ALL: [Tag; 6] = [Tag::Name, Tag::Ping, Tag::Sync, Tag::Mont, Tag::Freq, Tag::Data];

    pub fn as_bytes(self) -> &'static [u8; 4] {
        match self {
            Tag::Name => b"name",
            Tag::Ping => b"ping",
            Tag::Sync => b"sync",
            Tag::Mont => b"mont",
            Tag::Freq => b"freq",
            Tag::Data => b"data",
        }
    }

    pub fn as_str(self) -> &'static str {
        std::str::from_utf8(self.as_bytes()).expect("ascii tag")
    }

    pub fn from_bytes(raw: [u8; 4]) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| *t.as_bytes() == raw)
    }

    /// Datagram protocols may be lost; the rest ride the reliable channel.
    pub fn is_datagram(self) -> bool {
        matches!(self, Tag::Name | Tag::Ping | Tag::Sync)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown protocol tag {0:?}")]
    UnknownTag([u8; 4]),
    #[error("bad discriminator {0} in {1}")]
    BadDiscriminator(u8, &'static str),
    #[error("string is not UTF-8")]
    Utf8,
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    NameRequest(NameRequest),
    NameReply(NameReply),
    Ping(PingMessage),
    MemberSyncRequest(MemberSyncRequest),
    MemberSyncReply(MemberSyncReply),
    HierarchySyncRequest(HierarchySyncRequest),
    HierarchySyncReply(HierarchySyncReply),
    MontRequest { call_id: u64, req: MontRequest },
    MontReply { call_id: u64, reply: MontReply },
    FreqRequest { call_id: u64, req: FileRequest },
    FreqResponse { call_id: u64, resp: FileResponse },
    DataRequest { call_id: u64, req: DataRequest },
    DataResponse { call_id: u64, resp: DataResponse },
}

impl Message {
    pub fn tag(&self) -> Tag {
        match self {
            Message::NameRequest(_) | Message::NameReply(_) => Tag::Name,
            Message::Ping(_) => Tag::Ping,
            Message::MemberSyncRequest(_)
            | Message::MemberSyncReply(_)
            | Message::HierarchySyncRequest(_)
            | Message::HierarchySyncReply(_) => Tag::Sync,
            Message::MontRequest { .. } | Message::MontReply { .. } => Tag::Mont,
            Message::FreqRequest { .. } | Message::FreqResponse { .. } => Tag::Freq,
            Message::DataRequest { .. } | Message::DataResponse { .. } => Tag::Data,
        }
    }

    pub fn is_sync_reply(&self) -> bool {
        matches!(self, Message::MemberSyncReply(_) | Message::HierarchySyncReply(_))
    }

    pub fn is_freq_request(&self) -> bool {
        matches!(self, Message::FreqRequest { .. })
    }

    /// Short human-readable description for traces.
    pub fn summary(&self) -> String {
        match self {
            Message::NameRequest(r) => format!("name-req placeholder={:?}", r.placeholder_name),
            Message::NameReply(r) => format!("name-rep assigned={} host={}", r.assigned_name, r.host_name),
            Message::Ping(p) => format!("ping from={} ms={} hs={}", p.sender_name, p.member_seq, p.hier_seq),
            Message::MemberSyncRequest(r) => format!("members-req from={}", r.requester_name),
            Message::MemberSyncReply(r) => {
                format!("members-rep from={} seq={} n={}", r.provider_name, r.provider_seq, r.members.len())
            }
            Message::HierarchySyncRequest(r) => format!("hier-req from={}", r.requester_name),
            Message::HierarchySyncReply(r) => {
                let mut files = 0;
                r.owned_tree.walk_files("/", &mut |_, _| files += 1);
                format!("hier-rep from={} seq={} files={}", r.provider_name, r.provider_hier_seq, files)
            }
            Message::MontRequest { call_id, req } => format!("mont-req call={call_id} from={}", req.requester_name),
            Message::MontReply { call_id, reply } => format!("mont-rep call={call_id} status={:?}", reply.status),
            Message::FreqRequest { call_id, req } => {
                let extra = match &req.op {
                    FileOp::Rename { new_name } => format!(" to={new_name}"),
                    _ => String::new(),
                };
                format!("freq-req call={call_id} {} {}{extra} from={}", req.op.label(), req.path, req.requester)
            }
            Message::FreqResponse { call_id, resp } => match resp.status {
                Ok(()) => format!("freq-rep call={call_id} ok"),
                Err(e) => format!("freq-rep call={call_id} err={e}"),
            },
            Message::DataRequest { call_id, req } => match req {
                DataRequest::Read { physical_name, .. } => format!("data-req call={call_id} read {physical_name}"),
                DataRequest::Write { physical_name, bytes, .. } => {
                    format!("data-req call={call_id} write {physical_name} len={}", bytes.len())
                }
            },
            Message::DataResponse { call_id, resp } => match resp {
                DataResponse::Read(b) => format!("data-rep call={call_id} read len={}", b.len()),
                DataResponse::Written => format!("data-rep call={call_id} written"),
                DataResponse::Failed(e) => format!("data-rep call={call_id} err={e}"),
            },
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
    fn folder(&mut self, folder: &FolderNode) {
        self.str(&folder.name);
        self.u64(folder.children.len() as u64);
        for child in &folder.children {
            match child {
                Child::Folder(sub) => {
                    self.u8(0);
                    self.folder(sub);
                }
                Child::File(f) => {
                    self.u8(1);
                    self.str(&f.logical_name);
                    self.str(f.owner.as_str());
                    self.str(&f.physical_name);
                }
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize, WireError> {
        let n = self.u64()?;
        if n > self.buf.len() as u64 {
            return Err(WireError::Truncated);
        }
        Ok(n as usize)
    }
    fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }
    fn str(&mut self) -> Result<String, WireError> {
        String::from_utf8(self.bytes()?).map_err(|_| WireError::Utf8)
    }
    fn name(&mut self) -> Result<MemberName, WireError> {
        MemberName::new(self.str()?).map_err(|_| WireError::Invalid("member name"))
    }
    fn seq(&mut self) -> Result<SeqNum, WireError> {
        self.u64().map(SeqNum)
    }
    fn node(&mut self) -> Result<NodeId, WireError> {
        u32::try_from(self.u64()?).map(NodeId).map_err(|_| WireError::Invalid("address"))
    }
    fn port(&mut self) -> Result<u16, WireError> {
        u16::try_from(self.u64()?).map_err(|_| WireError::Invalid("port"))
    }
    fn folder(&mut self, depth: usize) -> Result<FolderNode, WireError> {
        if depth > MAX_DEPTH {
            return Err(WireError::Invalid("folder depth"));
        }
        let name = self.str()?;
        let count = self.u64()?;
        // each child needs at least a kind byte
        if count > self.buf.len() as u64 {
            return Err(WireError::Truncated);
        }
        let mut children = Vec::with_capacity(count as usize);
        for _ in 0..count {
            children.push(match self.u8()? {
                0 => Child::Folder(self.folder(depth + 1)?),
                1 => {
                    let logical = self.str()?;
                    let owner = self.name()?;
                    let physical = self.str()?;
                    Child::File(FileEntry::new(logical, owner, physical))
                }
                d => return Err(WireError::BadDiscriminator(d, "folder child")),
            });
        }
        Ok(FolderNode { name, children })
    }
}

fn storage_error_code(e: StorageError) -> u8 {
    match e {
        StorageError::NotGranted => 0,
        StorageError::NotFound => 1,
        StorageError::QuotaExceeded => 2,
    }
}

fn error_code_byte(e: ErrorCode) -> u8 {
    match e {
        ErrorCode::NameConflict => 1,
        ErrorCode::InvalidPath => 2,
        ErrorCode::NotOwner => 3,
        ErrorCode::NoMemory => 4,
        ErrorCode::Timeout => 5,
    }
}

/// Encodes a message as a complete frame, tag first.
pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64));
    w.0.extend_from_slice(msg.tag().as_bytes());
    match msg {
        Message::NameRequest(r) => {
            w.u8(0);
            w.str(&r.placeholder_name);
            w.u64(r.address.0 as u64);
            w.u64(r.port as u64);
        }
        Message::NameReply(r) => {
            w.u8(1);
            w.str(r.assigned_name.as_str());
            w.str(r.host_name.as_str());
        }
        Message::Ping(p) => {
            w.str(p.sender_name.as_str());
            w.u64(p.member_seq.0);
            w.u64(p.hier_seq.0);
        }
        Message::MemberSyncRequest(r) => {
            w.u8(0);
            w.str(r.requester_name.as_str());
        }
        Message::MemberSyncReply(r) => {
            w.u8(1);
            w.str(r.provider_name.as_str());
            w.u64(r.provider_seq.0);
            w.u64(r.members.len() as u64);
            for m in &r.members {
                w.str(m.name.as_str());
                w.u64(m.address.0 as u64);
                w.u64(m.port as u64);
            }
        }
        Message::HierarchySyncRequest(r) => {
            w.u8(2);
            w.str(r.requester_name.as_str());
        }
        Message::HierarchySyncReply(r) => {
            w.u8(3);
            w.str(r.provider_name.as_str());
            w.u64(r.provider_hier_seq.0);
            w.folder(&r.owned_tree);
        }
        Message::MontRequest { call_id, req } => {
            w.u8(0);
            w.u64(*call_id);
            w.str(req.requester_name.as_str());
        }
        Message::MontReply { call_id, reply } => {
            w.u8(1);
            w.u64(*call_id);
            w.u8(match reply.status {
                MontStatus::Granted => 0,
                MontStatus::Ignored => 1,
            });
        }
        Message::FreqRequest { call_id, req } => {
            w.u8(0);
            w.u64(*call_id);
            match &req.op {
                FileOp::Add => {
                    w.u8(0);
                    w.str(&req.path);
                }
                FileOp::Delete => {
                    w.u8(1);
                    w.str(&req.path);
                }
                FileOp::Rename { new_name } => {
                    w.u8(2);
                    w.str(&req.path);
                    w.str(new_name);
                }
            }
            w.str(req.requester.as_str());
        }
        Message::FreqResponse { call_id, resp } => {
            w.u8(1);
            w.u64(*call_id);
            w.u8(match resp.status {
                Ok(()) => 0,
                Err(e) => error_code_byte(e),
            });
        }
        Message::DataRequest { call_id, req } => {
            w.u8(0);
            w.u64(*call_id);
            match req {
                DataRequest::Read { requester, physical_name } => {
                    w.u8(0);
                    w.str(requester.as_str());
                    w.str(physical_name);
                }
                DataRequest::Write { requester, physical_name, bytes } => {
                    w.u8(1);
                    w.str(requester.as_str());
                    w.str(physical_name);
                    w.bytes(bytes);
                }
            }
        }
        Message::DataResponse { call_id, resp } => {
            w.u8(1);
            w.u64(*call_id);
            match resp {
                DataResponse::Read(bytes) => {
                    w.u8(0);
                    w.bytes(bytes);
                }
                DataResponse::Written => w.u8(1),
                DataResponse::Failed(e) => {
                    w.u8(2);
                    w.u8(storage_error_code(*e));
                }
            }
        }
    }
    w.0
}

/// True for a `freq` request frame, judged from the header alone.
pub fn is_freq_request_frame(frame: &[u8]) -> bool {
    frame.len() > 4 && &frame[..4] == Tag::Freq.as_bytes() && frame[4] == 0
}

/// True for a member or hierarchy sync reply frame.
pub fn is_sync_reply_frame(frame: &[u8]) -> bool {
    frame.len() > 4 && &frame[..4] == Tag::Sync.as_bytes() && matches!(frame[4], 1 | 3)
}

/// Reads the tag at offset 0 without decoding the body.
pub fn peek_tag(frame: &[u8]) -> Result<Tag, WireError> {
    let raw: [u8; 4] = frame.get(..4).ok_or(WireError::Truncated)?.try_into().expect("4 bytes");
    Tag::from_bytes(raw).ok_or(WireError::UnknownTag(raw))
}

pub fn decode(frame: &[u8]) -> Result<Message, WireError> {
    let tag = peek_tag(frame)?;
    let mut r = Reader { buf: &frame[4..] };
    let msg = match tag {
        Tag::Name => match r.u8()? {
            0 => Message::NameRequest(NameRequest {
                placeholder_name: r.str()?,
                address: r.node()?,
                port: r.port()?,
            }),
            1 => Message::NameReply(NameReply { assigned_name: r.name()?, host_name: r.name()? }),
            d => return Err(WireError::BadDiscriminator(d, "name")),
        },
        Tag::Ping => Message::Ping(PingMessage { sender_name: r.name()?, member_seq: r.seq()?, hier_seq: r.seq()? }),
        Tag::Sync => match r.u8()? {
            0 => Message::MemberSyncRequest(MemberSyncRequest { requester_name: r.name()? }),
            1 => {
                let provider_name = r.name()?;
                let provider_seq = r.seq()?;
                let n = r.u64()?;
                if n > r.buf.len() as u64 {
                    return Err(WireError::Truncated);
                }
                let members = (0..n)
                    .map(|_| Ok(MemberInfo { name: r.name()?, address: r.node()?, port: r.port()? }))
                    .collect::<Result<_, WireError>>()?;
                Message::MemberSyncReply(MemberSyncReply { provider_name, provider_seq, members })
            }
            2 => Message::HierarchySyncRequest(HierarchySyncRequest { requester_name: r.name()? }),
            3 => Message::HierarchySyncReply(HierarchySyncReply {
                provider_name: r.name()?,
                provider_hier_seq: r.seq()?,
                owned_tree: r.folder(0)?,
            }),
            d => return Err(WireError::BadDiscriminator(d, "sync")),
        },
        Tag::Mont => match r.u8()? {
            0 => Message::MontRequest { call_id: r.u64()?, req: MontRequest { requester_name: r.name()? } },
            1 => {
                let call_id = r.u64()?;
                let status = match r.u8()? {
                    0 => MontStatus::Granted,
                    1 => MontStatus::Ignored,
                    d => return Err(WireError::BadDiscriminator(d, "mont status")),
                };
                Message::MontReply { call_id, reply: MontReply { status } }
            }
            d => return Err(WireError::BadDiscriminator(d, "mont")),
        },
        Tag::Freq => match r.u8()? {
            0 => {
                let call_id = r.u64()?;
                let op_byte = r.u8()?;
                let path = r.str()?;
                let op = match op_byte {
                    0 => FileOp::Add,
                    1 => FileOp::Delete,
                    2 => FileOp::Rename { new_name: r.str()? },
                    d => return Err(WireError::BadDiscriminator(d, "freq op")),
                };
                Message::FreqRequest { call_id, req: FileRequest { op, path, requester: r.name()? } }
            }
            1 => {
                let call_id = r.u64()?;
                let status = match r.u8()? {
                    0 => Ok(()),
                    1 => Err(ErrorCode::NameConflict),
                    2 => Err(ErrorCode::InvalidPath),
                    3 => Err(ErrorCode::NotOwner),
                    4 => Err(ErrorCode::NoMemory),
                    5 => Err(ErrorCode::Timeout),
                    d => return Err(WireError::BadDiscriminator(d, "freq status")),
                };
                Message::FreqResponse { call_id, resp: FileResponse { status } }
            }
            d => return Err(WireError::BadDiscriminator(d, "freq")),
        },
        Tag::Data => match r.u8()? {
            0 => {
                let call_id = r.u64()?;
                let req = match r.u8()? {
                    0 => DataRequest::Read { requester: r.name()?, physical_name: r.str()? },
                    1 => DataRequest::Write { requester: r.name()?, physical_name: r.str()?, bytes: r.bytes()? },
                    d => return Err(WireError::BadDiscriminator(d, "data op")),
                };
                Message::DataRequest { call_id, req }
            }
            1 => {
                let call_id = r.u64()?;
                let resp = match r.u8()? {
                    0 => DataResponse::Read(r.bytes()?),
                    1 => DataResponse::Written,
                    2 => DataResponse::Failed(match r.u8()? {
                        0 => StorageError::NotGranted,
                        1 => StorageError::NotFound,
                        2 => StorageError::QuotaExceeded,
                        d => return Err(WireError::BadDiscriminator(d, "storage error")),
                    }),
                    d => return Err(WireError::BadDiscriminator(d, "data response")),
                };
                Message::DataResponse { call_id, resp }
            }
            d => return Err(WireError::BadDiscriminator(d, "data")),
        },
    };
    if !r.buf.is_empty() {
        return Err(WireError::Trailing(r.buf.len()));
    }
    Ok(msg)
}
