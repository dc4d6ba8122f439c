//! Owner-side file handling without any network: the owner applies
//! requests to its own tree and blob store, and a quota caps writes.

use edgefs::fileops::{handle_file_request, FileOp, FileRequest};
use edgefs::metadata::{HierarchyTree, MemberList, MemberName, MemberRecord, NodeId};
use edgefs::storage::BlobStore;

pub fn run_example() -> Vec<String> {
    let owner: MemberName = "A".parse().unwrap();
    let mut tree = HierarchyTree::new(owner.clone());
    let mut store = BlobStore::new(Some(8));
    let mut members = MemberList::new();
    members.add(MemberRecord::new(owner.clone(), NodeId(0), 7000));

    let send = |tree: &mut HierarchyTree, store: &mut BlobStore, op: FileOp, path: &str| {
        let req = FileRequest { op: op.clone(), path: path.into(), requester: owner.clone() };
        let (resp, _) = handle_file_request(tree, store, &members, &req);
        format!("{:<7} {path:<16} -> {:?}", op.label(), resp.status)
    };
    let mut log = vec![
        send(&mut tree, &mut store, FileOp::Add, "/notes/todo.txt"),
        // the owner cannot tell a repeat from a duplicated request, so it succeeds
        send(&mut tree, &mut store, FileOp::Add, "/notes/todo.txt"),
        send(&mut tree, &mut store, FileOp::Rename { new_name: "done.txt".into() }, "/notes/todo.txt"),
        send(&mut tree, &mut store, FileOp::Add, "/bad//path"),
    ];

    let physical = tree.lookup_file("/notes/done.txt").unwrap().physical_name.clone();
    let fits = store.write(&physical, b"12345678".to_vec());
    let too_big = store.write(&physical, b"123456789".to_vec());
    log.push(format!("write 8 bytes -> {fits:?}, write 9 bytes -> {too_big:?}"));

    log.push(send(&mut tree, &mut store, FileOp::Delete, "/notes/done.txt"));
    log.push(format!("own seq now {:?}, blobs left {}", tree.own_seq(), store.blobs().len()));
    log
}

#[allow(dead_code)]
fn main() {
    for line in run_example() {
        println!("{line}");
    }
}
