//! Grows a membership by joins through different hosts and shows the
//! member lists converging through ping-triggered member sync.

use edgefs::reachability::ReachabilityConfig;
use edgefs::scenario::Simulation;
use edgefs::simnet::NetConfig;

pub fn run_example() -> Vec<(String, Vec<String>)> {
    let mut sim = Simulation::new(NetConfig::default(), ReachabilityConfig::default()).unwrap();
    sim.spawn("a", Some("A".parse().unwrap()), None).unwrap();
    for label in ["b", "c", "d", "e"] {
        sim.spawn(label, None, None).unwrap();
    }
    // b and c join through a, d through b, e through d
    sim.join("b", "a").unwrap();
    sim.join("c", "a").unwrap();
    sim.run_for(2);
    sim.join("d", "b").unwrap();
    sim.run_for(2);
    sim.join("e", "d").unwrap();
    sim.run_for(60);

    let mut lists = Vec::new();
    for label in sim.labels().to_vec() {
        let node = sim.node(&label);
        let names: Vec<String> = node.members().names().map(|n| n.to_string()).collect();
        lists.push((format!("{label} ({})", node.name().unwrap()), names));
    }
    lists
}

#[allow(dead_code)]
fn main() {
    for (who, names) in run_example() {
        println!("{who:>10} knows {}", names.join(" "));
    }
}
