//! Seeded random scenarios for convergence testing.
//!
//! Every generated scenario spawns a bootstrap member first, joins the
//! others through already-spawned nodes, mixes file operations with
//! partitions and duplication faults, and ends healed.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, Scenario, ScenarioEvent};
use crate::metadata::MemberName;
use crate::node::LocalOp;
use crate::reachability::ReachabilityConfig;
use crate::simnet::wire::Tag;
use crate::simnet::NetConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomParams {
    pub max_nodes: usize,
    pub max_events: usize,
    pub max_loss: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams { max_nodes: 10, max_events: 100, max_loss: 0.3 }
    }
}

const FOLDERS: [&str; 4] = ["", "/docs", "/docs/old", "/pics"];
const NAMES: [&str; 6] = ["a.txt", "b.txt", "Jupiter.jpg", "notes", "old", "x"];

fn random_path(rng: &mut ChaCha8Rng) -> String {
    format!("{}/{}", FOLDERS.choose(rng).expect("non-empty"), NAMES.choose(rng).expect("non-empty"))
}

/// A scenario and network config that are a pure function of `seed`.
pub fn random_scenario(seed: u64, params: RandomParams) -> (Scenario, NetConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_a210);
    let node_count = rng.random_range(2..=params.max_nodes.max(2));
    let labels: Vec<String> = (0..node_count).map(|i| format!("n{i}")).collect();

    let mut events = Vec::new();
    let mut push = |at, action| events.push(ScenarioEvent { at, action, line: 0 });

    push(0, Action::Spawn { node: labels[0].clone(), bootstrap: Some(MemberName::new("A").expect("valid")), quota: None });
    for label in &labels[1..] {
        let quota = rng.random_bool(0.1).then(|| rng.random_range(0..64));
        push(0, Action::Spawn { node: label.clone(), bootstrap: None, quota });
    }

    let mut tick = 0;
    let budget = params.max_events.saturating_sub(node_count + 1);
    // joins come first, spread over the first few periods
    let mut joined = vec![labels[0].clone()];
    for label in &labels[1..] {
        tick += rng.random_range(0..4);
        let host = joined.choose(&mut rng).expect("bootstrap joined").clone();
        push(tick, Action::Join { node: label.clone(), host });
        joined.push(label.clone());
    }

    let mut partitioned = false;
    let extra = budget.saturating_sub(node_count - 1);
    let body = if extra == 0 { 0 } else { rng.random_range(extra / 2..=extra) };
    for _ in 0..body {
        tick += rng.random_range(1..8);
        let node = labels.choose(&mut rng).expect("non-empty").clone();
        let roll = rng.random_range(0..100);
        let action = match roll {
            0..=29 => Action::Op { node, op: LocalOp::Create { path: random_path(&mut rng) } },
            30..=41 => Action::Op { node, op: LocalOp::Delete { path: random_path(&mut rng) } },
            42..=53 => {
                let new_name = NAMES.choose(&mut rng).expect("non-empty").to_string();
                Action::Op { node, op: LocalOp::Rename { path: random_path(&mut rng), new_name } }
            }
            54..=61 => {
                let bytes = format!("v{}", rng.random_range(0..1000)).into_bytes();
                Action::Op { node, op: LocalOp::Write { path: random_path(&mut rng), bytes } }
            }
            62..=67 => Action::Op { node, op: LocalOp::Read { path: random_path(&mut rng) } },
            68..=79 => {
                partitioned = true;
                let groups = rng.random_range(2..=3.min(node_count));
                let mut split = vec![Vec::new(); groups];
                for label in &labels {
                    // a few nodes end up isolated outright
                    if rng.random_bool(0.9) {
                        split[rng.random_range(0..groups)].push(label.clone());
                    }
                }
                split.retain(|g| !g.is_empty());
                if split.is_empty() {
                    split.push(vec![node]);
                }
                Action::Partition { groups: split }
            }
            80..=87 => {
                partitioned = false;
                Action::Heal
            }
            88..=93 => {
                let tag = [None, Some(Tag::Freq), Some(Tag::Sync), Some(Tag::Ping)].choose(&mut rng).copied().flatten();
                Action::Dup { node, tag }
            }
            _ => Action::Checkpoint { label: format!("c{tick}") },
        };
        push(tick, action);
    }
    if partitioned {
        tick += rng.random_range(1..8);
        push(tick, Action::Heal);
    }

    let delay_min = rng.random_range(1..=2);
    let net = NetConfig {
        seed,
        delay_min,
        delay_max: delay_min + rng.random_range(0..=3),
        loss_probability: rng.random_range(0.0..=params.max_loss.min(0.99)),
        ..NetConfig::default()
    };
    (Scenario { reach: ReachabilityConfig::default(), events }, net)
}
