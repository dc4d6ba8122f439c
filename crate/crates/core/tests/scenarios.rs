mod common;

use std::process::Command;

use common::*;
use edgefs::reachability::ReachabilityConfig;
use edgefs::scenario::{expected_view, run, RunOptions, Scenario, Simulation};
use edgefs::simnet::NetConfig;

#[test]
fn bundled_scenarios_converge_under_faults() {
    for name in SCENARIO_FILES {
        let scenario = Scenario::parse(&scenario_file(name)).unwrap();
        for seed in 0..8 {
            let net = NetConfig { seed, delay_min: 1, delay_max: 4, loss_probability: 0.2, ..NetConfig::default() };
            let out = run(&scenario, &RunOptions { net, ..RunOptions::default() }).unwrap();
            assert!(out.violation.is_none(), "{name} seed {seed}: {:?}", out.violation);
            let report = out.final_report.unwrap();
            assert!(report.converged, "{name} seed {seed}: {:?}", report.divergences);
        }
    }
}

fn three_owners() -> Simulation {
    let mut sim = Simulation::new(NetConfig::default(), ReachabilityConfig::default()).unwrap();
    sim.spawn("a", Some(m("A")), None).unwrap();
    sim.spawn("b", None, None).unwrap();
    sim.spawn("c", None, None).unwrap();
    sim.join("b", "a").unwrap();
    sim.join("c", "a").unwrap();
    sim.run_until(30);
    // creating while alone keeps each file with its creator
    sim.partition(&[vec!["a".into()], vec!["b".into()], vec!["c".into()]]).unwrap();
    sim.run_until(60);
    for (label, path) in [("a", "/fa"), ("b", "/fb"), ("c", "/fc")] {
        sim.op(label, edgefs::node::LocalOp::Create { path: path.into() }).unwrap();
    }
    sim.run_until(61);
    sim
}

#[test]
fn union_oracle_when_connected() {
    let mut sim = three_owners();
    sim.heal();
    sim.settle();
    for label in ["a", "b", "c"] {
        let id = sim.id(label).unwrap();
        assert_eq!(expected_view(&sim, id).len(), 3, "{label}");
        assert_eq!(sim.node(label).list("/").unwrap().len(), 3, "{label}");
    }
    assert!(sim.check("end").converged);
}

#[test]
fn union_oracle_under_partition() {
    let mut sim = three_owners();
    sim.partition(&[vec!["a".into(), "b".into()], vec!["c".into()]]).unwrap();
    sim.settle();
    let names = |label: &str| -> Vec<String> {
        let mut v: Vec<String> = sim.node(label).list("/").unwrap().iter().map(|l| l.name().to_string()).collect();
        v.sort();
        v
    };
    assert_eq!(names("a"), ["fa", "fb"]);
    assert_eq!(names("b"), ["fa", "fb"]);
    assert_eq!(names("c"), ["fc"]);
    assert_eq!(expected_view(&sim, sim.id("c").unwrap()).len(), 1);
    let report = sim.check("split");
    assert!(report.converged, "{:?}", report.divergences);
}

#[test]
fn checkpoint_reports_divergence_mid_run() {
    let scenario = Scenario::parse("0 spawn a A\n0 spawn b\n1 join b a\n20 create a /x\n20 checkpoint early\n").unwrap();
    let out = run(&scenario, &RunOptions::default()).unwrap();
    assert!(!out.checkpoints[0].converged);
    assert!(out.passed());
    assert!(out.trace.contains("chk - checkpoint early diverged"));
}

#[test]
fn join_through_an_unreachable_host_is_reported() {
    let scenario = Scenario::parse("0 spawn a A\n0 spawn b\n0 partition a b\n1 join b a\n").unwrap();
    let out = run(&scenario, &RunOptions::default()).unwrap();
    assert!(!out.passed());
    let report = out.final_report.unwrap();
    assert!(report.divergences.iter().any(|d| d.contains("b")), "{:?}", report.divergences);
}

#[test]
fn same_seed_same_trace_other_seed_other_trace() {
    let scenario = Scenario::parse(&scenario_file("churn.scn")).unwrap();
    let opts = |seed| RunOptions {
        net: NetConfig { seed, delay_min: 1, delay_max: 5, loss_probability: 0.25, ..NetConfig::default() },
        ..RunOptions::default()
    };
    let a = run(&scenario, &opts(1)).unwrap();
    let b = run(&scenario, &opts(1)).unwrap();
    let c = run(&scenario, &opts(2)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report_text("churn", &opts(1)), b.report_text("churn", &opts(1)));
    assert_ne!(a.trace, c.trace);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_edgefs")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = format!("{}/scenarios/jupiter.scn", env!("CARGO_MANIFEST_DIR"));
    let trace = dir.path().join("t.txt");
    let report = dir.path().join("r.txt");
    let out = cli(&["run", &scenario, "--seed", "4", "--trace", trace.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(report).unwrap();
    assert!(report.contains("passed=true"));
    assert!(report.contains("seed=4"));
    assert!(std::fs::read_to_string(trace).unwrap().contains("a act - op create /Jupiter.jpg"));

    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "0 spawn a A\n0 fly a\n").unwrap();
    let out = cli(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let stuck = dir.path().join("stuck.scn");
    std::fs::write(&stuck, "0 spawn a A\n0 spawn b\n0 partition a b\n1 join b a\n").unwrap();
    assert_eq!(cli(&["run", stuck.to_str().unwrap()]).status.code(), Some(1));

    assert_eq!(cli(&["run", &scenario, "--delay", "5..2"]).status.code(), Some(2));
    assert_eq!(cli(&["run", &scenario, "--loss", "1.5"]).status.code(), Some(2));
}
