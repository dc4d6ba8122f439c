//! Two members create /Jupiter.jpg while apart. A third member that syncs
//! with both sees two flagged copies; renaming one resolves it everywhere.

use edgefs::fileops::Listing;
use edgefs::scenario::{Scenario, Simulation};
use edgefs::simnet::NetConfig;

fn names(sim: &Simulation, label: &str) -> Vec<String> {
    sim.node(label).list("/").unwrap().iter().map(Listing::name).map(str::to_string).collect()
}

pub fn run_example() -> (Vec<String>, Vec<Vec<String>>) {
    let text = include_str!("../scenarios/jupiter.scn");
    let scenario = Scenario::parse(text).unwrap();
    let mut sim = Simulation::new(NetConfig::default(), scenario.reach).unwrap();

    let mut at_b = Vec::new();
    for ev in &scenario.events {
        sim.run_until(ev.at);
        sim.apply(&ev.action).unwrap();
        if ev.action.to_string() == "checkpoint b-sees-both" {
            at_b = names(&sim, "b");
        }
    }
    sim.settle();
    let after = ["a", "b", "c"].iter().map(|l| names(&sim, l)).collect();
    (at_b, after)
}

#[allow(dead_code)]
fn main() {
    let (at_b, after) = run_example();
    println!("b while apart: {at_b:?}");
    for (label, listing) in ["a", "b", "c"].iter().zip(after) {
        println!("{label} after rename: {listing:?}");
    }
}
