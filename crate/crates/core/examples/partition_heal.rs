//! Runs the bundled partition scenario and prints each checkpoint verdict
//! with the per-node view hashes.

use edgefs::scenario::{run, RunOptions, Scenario};
use edgefs::simnet::NetConfig;

pub fn run_example() -> Vec<(String, bool, Vec<String>)> {
    let scenario = Scenario::parse(include_str!("../scenarios/partition_heal.scn")).unwrap();
    let opts = RunOptions { net: NetConfig { seed: 3, loss_probability: 0.1, ..NetConfig::default() }, ..RunOptions::default() };
    let outcome = run(&scenario, &opts).unwrap();
    outcome
        .checkpoints
        .iter()
        .chain(outcome.final_report.as_ref())
        .map(|r| {
            let hashes = r.nodes.iter().map(|n| format!("{}:{}", n.label, &n.view_hash[..8])).collect();
            (r.label.clone(), r.converged, hashes)
        })
        .collect()
}

#[allow(dead_code)]
fn main() {
    for (label, converged, hashes) in run_example() {
        println!("{label:>8} converged={converged:<5} {}", hashes.join(" "));
    }
}
