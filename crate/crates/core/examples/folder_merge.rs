//! The folder merge on its own: a provider's fresh view of one folder is
//! merged into what we hold, leaving other owners' files alone.

use edgefs::hierarchy_sync::{display_name, recompute_conflicts, sync_folder};
use edgefs::metadata::{Child, FileEntry, FolderNode, MemberName, SeqNum};

fn file(name: &str, owner: &str) -> Child {
    let owner: MemberName = owner.parse().unwrap();
    Child::File(FileEntry::new(name, owner, format!("{name}.blob")))
}

pub fn run_example() -> Vec<String> {
    let provider: MemberName = "A/1".parse().unwrap();
    // we hold: a by A, b and old by A/1, c by A/2
    let current = vec![file("a", "A"), file("b", "A/1"), file("old", "A/1"), file("c", "A/2")];
    // A/1 now has: b, d and a file called c
    let provided = vec![file("b", "A/1"), file("d", "A/1"), file("c", "A/1")];

    let mut folder = FolderNode { name: "docs".into(), children: sync_folder(&current, &provided, &provider, SeqNum(4)) };
    recompute_conflicts(&mut folder);
    folder.files().map(|f| format!("{} (owner {})", display_name(f), f.owner)).collect()
}

#[allow(dead_code)]
fn main() {
    for line in run_example() {
        println!("{line}");
    }
}
