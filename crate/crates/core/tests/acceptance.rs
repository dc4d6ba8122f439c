//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use edgefs::fileops::Listing;
use edgefs::hierarchy_sync::{display_name, sync_folder};
use edgefs::metadata::{Child, NodeId, SeqNum};
use edgefs::node::{Node, NodeConfig, NodeEvent, Note};
use edgefs::reachability::{PingMessage, ReachabilityConfig};
use edgefs::scenario::random::{random_scenario, RandomParams};
use edgefs::scenario::{run, Action, RunOptions, Scenario, Simulation};
use edgefs::simnet::wire::{self, Message};
use edgefs::simnet::{Channel, DupPolicy, Envelope, NetConfig};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root_files(listing: &[Listing]) -> BTreeSet<(String, String)> {
    listing
        .iter()
        .filter_map(|l| match l {
            Listing::File { display_name, owner } => Some((display_name.clone(), owner.to_string())),
            Listing::Folder(_) => None,
        })
        .collect()
}

fn jupiter() -> Verdict {
    let started = Instant::now();
    let scenario = Scenario::parse(&scenario_file("jupiter.scn")).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(NetConfig::default(), scenario.reach).map_err(|e| e.to_string())?;
    sim.set_check_invariants(true);
    let mut saw_checkpoint = false;
    for ev in &scenario.events {
        sim.run_until(ev.at);
        sim.apply(&ev.action).map_err(|e| e.to_string())?;
        if matches!(&ev.action, Action::Checkpoint { label } if label == "b-sees-both") {
            saw_checkpoint = true;
            let root: Vec<_> = sim.node("b").tree().root.files().collect();
            ensure(root.len() == 2, || format!("B's root holds {root:?}"))?;
            ensure(root.iter().all(|f| f.conflicted), || format!("B's root entries not all flagged: {root:?}"))?;
            ensure(root[0].logical_name == "Jupiter.jpg" && root[1].logical_name == "Jupiter.jpg", || {
                format!("unexpected names {root:?}")
            })?;
            let shown: BTreeSet<String> = root.iter().map(|f| display_name(f)).collect();
            ensure(shown.len() == 2, || format!("display names collide: {shown:?}"))?;
            let expected: BTreeSet<String> =
                ["Jupiter.jpg.CONFLICT.A".to_string(), "Jupiter.jpg.CONFLICT.A-2".to_string()].into();
            ensure(shown == expected, || format!("display names {shown:?}"))?;
        }
    }
    ensure(saw_checkpoint, || "scenario has no b-sees-both checkpoint".into())?;
    sim.settle();
    ensure(sim.violations().is_empty(), || format!("violation {:?}", sim.violations()[0]))?;
    let want: BTreeSet<(String, String)> =
        [("Jupiter.jpg".to_string(), "A".to_string()), ("Saturn.jpg".to_string(), "A/2".to_string())].into();
    for label in ["a", "b", "c"] {
        let node = sim.node(label);
        let got = root_files(&node.list("/").map_err(|e| e.to_string())?);
        ensure(got == want, || format!("{label} lists {got:?}"))?;
        ensure(node.tree().root.files().all(|f| !f.conflicted), || format!("{label} still has flags"))?;
    }
    let report = sim.check("end");
    ensure(report.converged, || format!("not converged: {:?}", report.divergences))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("B saw 2 flagged copies; all nodes list Jupiter.jpg and Saturn.jpg unflagged ({elapsed:.1?})"))
}

fn random_convergence() -> Verdict {
    let started = Instant::now();
    for seed in 0..200 {
        let (scenario, net) = random_scenario(seed, RandomParams::default());
        let opts = RunOptions { net, check_invariants: false, minimize: false, ..RunOptions::default() };
        let out = run(&scenario, &opts).map_err(|e| e.to_string())?;
        let report = out.final_report.as_ref().ok_or_else(|| format!("seed {seed}: no final report"))?;
        ensure(report.converged, || format!("seed {seed} diverged: {:?}", report.divergences))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("200 seeds converged ({elapsed:.1?})"))
}

fn ping_from(sender: &Node, to: NodeId, now: u64) -> NodeEvent {
    let msg = Message::Ping(PingMessage {
        sender_name: sender.name().unwrap().clone(),
        member_seq: sender.members().seq(),
        hier_seq: sender.tree().own_seq(),
    });
    let frame = wire::encode(&msg);
    NodeEvent::Deliver(Envelope {
        src: sender.id(),
        dst: to,
        channel: Channel::Datagram,
        protocol_tag: *b"ping",
        payload: frame,
        sent_at: now,
        deliver_at: now,
    })
}

/// Direct node-level check: three silent boundaries keep the peer, the
/// fourth flags it on that very tick.
fn threshold_node_level() -> Result<(), String> {
    let reach = ReachabilityConfig::new(5, 4).unwrap();
    let mut nodes = vec![Node::new(NodeId(0), NodeConfig::new(reach, 1)), Node::new(NodeId(1), NodeConfig::new(reach, 1))];
    nodes[0].bootstrap(m("A"), 0);
    let out = nodes[1].step(0, NodeEvent::Join { host: NodeId(0) });
    pump(&mut nodes, 0, NodeId(1), out);
    let b_name = nodes[1].name().cloned().ok_or("B never named")?;
    let reachable = |n: &Node| n.members().get(&b_name).is_some_and(|r| r.reachable);

    let ev = ping_from(&nodes[1], NodeId(0), 1);
    nodes[0].step(1, ev);
    for t in [5, 10, 15] {
        let out = nodes[0].step(t, NodeEvent::Timer);
        ensure(reachable(&nodes[0]), || format!("flagged after only {} silent periods at tick {t}", t / 5))?;
        ensure(!out.notes.iter().any(|n| matches!(n, Note::Unreachable(_))), || "unreachable note".into())?;
    }
    let ev = ping_from(&nodes[1], NodeId(0), 16);
    nodes[0].step(16, ev);
    for t in [20, 25, 30] {
        nodes[0].step(t, NodeEvent::Timer);
        ensure(reachable(&nodes[0]), || format!("flagged early at tick {t}"))?;
    }
    ensure(nodes[0].next_wakeup() == Some(35), || format!("next wakeup {:?}", nodes[0].next_wakeup()))?;
    let out = nodes[0].step(35, NodeEvent::Timer);
    ensure(!reachable(&nodes[0]), || "not flagged at the fourth silent period (tick 35)".into())?;
    ensure(out.notes.contains(&Note::Unreachable(b_name.clone())), || "no unreachable note at tick 35".into())?;
    Ok(())
}

/// The same rule seen through a simulated run: count a's ping rounds
/// between b's last ping and the flag.
fn threshold_sim_level() -> Result<(), String> {
    let scenario = Scenario::parse("0 spawn a A\n0 spawn b\n1 join b a\n40 partition a b\n").map_err(|e| e.to_string())?;
    let out = run(&scenario, &RunOptions::default()).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = out.trace.lines().collect();
    let last_ping = lines
        .iter()
        .rposition(|l| l.contains(" a in ping src=b"))
        .ok_or("a never heard b")?;
    let flag = lines
        .iter()
        .position(|l| l.contains(" a note ping unreachable A/1"))
        .ok_or("a never flagged b")?;
    ensure(flag > last_ping, || "flag before last ping".into())?;
    // rounds whose silence counts: the one at the flag plus those before it
    let rounds = lines[last_ping..flag].iter().filter(|l| l.contains(" a note ping ping-round")).count() + 1;
    ensure(rounds == 4, || format!("flagged in silent period {rounds}"))?;
    Ok(())
}

fn threshold() -> Verdict {
    threshold_node_level()?;
    threshold_sim_level()?;
    Ok("not flagged after 3 silent periods, flagged on the tick of the 4th".into())
}

fn visibility() -> Verdict {
    let mut runs = 0;
    for name in SCENARIO_FILES {
        let scenario = Scenario::parse(&scenario_file(name)).map_err(|e| format!("{name}: {e}"))?;
        for seed in 0..5 {
            let net = NetConfig { seed, ..NetConfig::default() };
            let out = run(&scenario, &RunOptions { net, minimize: false, ..RunOptions::default() })
                .map_err(|e| e.to_string())?;
            if let Some(v) = &out.violation {
                return Err(format!("{name} seed {seed}: {:?}", v.first));
            }
            runs += 1;
        }
    }
    for seed in 0..200 {
        let (scenario, net) = random_scenario(seed, RandomParams::default());
        let out = run(&scenario, &RunOptions { net, ..RunOptions::default() }).map_err(|e| e.to_string())?;
        if let Some(v) = &out.violation {
            return Err(format!("random seed {seed}: {:?}, shortest prefix {} events", v.first, v.prefix_len));
        }
        runs += 1;
    }
    Ok(format!("checked after every event of {runs} runs"))
}

fn folder_merge_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf01d);
    for case in 0..10_000 {
        let (current, provided, provider) = random_folder_pair(&mut rng);
        let seq = SeqNum(case as u64 % 7 + 1);
        let merged: Vec<Child> = sync_folder(&current, &provided, &provider, seq);
        if let Some(e) = merge_oracle_mismatch(&current, &provided, &provider, seq, &merged) {
            return Err(format!("case {case}: {e}"));
        }
    }
    Ok("10000 cases match".into())
}

fn duplication() -> Verdict {
    let mut duplicated = 0;
    for seed in 0..100 {
        let (scenario, net) = random_scenario(seed, RandomParams::default());
        let base = RunOptions { net, check_invariants: false, minimize: false, ..RunOptions::default() };
        let plain = run(&scenario, &base).map_err(|e| e.to_string())?;
        let dup = DupPolicy { freq_requests: true, sync_replies: true };
        let doubled = run(&scenario, &RunOptions { dup_policy: dup, ..base }).map_err(|e| e.to_string())?;
        ensure(plain.digests == doubled.digests, || format!("seed {seed}: final state differs"))?;
        duplicated += doubled.net_stats.duplicated;
    }
    Ok(format!("100 runs, {duplicated} duplicated messages, identical final state"))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_edgefs");
    let scenario = format!("{}/scenarios/partition_heal.scn", env!("CARGO_MANIFEST_DIR"));
    let mut traces = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("trace{i}.txt"));
        let status = Command::new(bin)
            .args(["run", &scenario, "--seed", "7", "--loss", "0.2", "--delay", "1..4", "--trace"])
            .arg(&path)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("run {i} exited with {status}"))?;
        traces.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(traces[0] == traces[1], || "trace files differ".into())?;
    for seed in 0..20 {
        let (scenario, net) = random_scenario(seed, RandomParams::default());
        let opts = RunOptions { net, ..RunOptions::default() };
        let a = run(&scenario, &opts).map_err(|e| e.to_string())?;
        let b = run(&scenario, &opts).map_err(|e| e.to_string())?;
        ensure(a.trace == b.trace, || format!("random seed {seed}: traces differ"))?;
    }
    Ok(format!("CLI trace files identical ({} bytes), 20 random traces identical", traces[0].len()))
}

fn name_uniqueness() -> Verdict {
    let trees = all_labelled_trees(5);
    ensure(trees.len() == 125, || format!("{} trees", trees.len()))?;
    for (i, parent) in trees.iter().enumerate() {
        let scenario = Scenario::parse(&join_tree_scenario(parent)).map_err(|e| e.to_string())?;
        let out = run(&scenario, &RunOptions::default()).map_err(|e| e.to_string())?;
        if let Some(v) = &out.violation {
            return Err(format!("tree {i}: {:?}", v.first));
        }
        let report = out.final_report.as_ref().ok_or("no report")?;
        let names: Vec<_> = report.nodes.iter().map(|n| n.name.clone()).collect();
        ensure(names.iter().all(Option::is_some), || format!("tree {i}: unnamed node {names:?}"))?;
        let distinct: BTreeSet<_> = names.iter().collect();
        ensure(distinct.len() == 5, || format!("tree {i}: duplicate names {names:?}"))?;
        ensure(report.converged, || format!("tree {i}: {:?}", report.divergences))?;
    }
    Ok("125 join trees, 5 distinct names each".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("jupiter conflict reproduction", jupiter),
        ("eventual consistency, 200 random scenarios", random_convergence),
        ("inactivity threshold", threshold),
        ("visibility on every event", visibility),
        ("folder merge oracle", folder_merge_oracle),
        ("duplicated requests and replies", duplication),
        ("deterministic traces", determinism),
        ("name uniqueness over join trees", name_uniqueness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
