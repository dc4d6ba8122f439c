//! Cuts one member off and lets it back in, printing when the others
//! notice. With a 5 tick period and a threshold of 4 silent periods a
//! member disappears roughly 20 ticks after its last ping.

use edgefs::reachability::ReachabilityConfig;
use edgefs::scenario::Simulation;
use edgefs::simnet::NetConfig;

pub fn run_example() -> Vec<String> {
    let mut sim = Simulation::new(NetConfig::default(), ReachabilityConfig::default()).unwrap();
    sim.spawn("a", Some("A".parse().unwrap()), None).unwrap();
    sim.spawn("b", None, None).unwrap();
    sim.spawn("c", None, None).unwrap();
    sim.join("b", "a").unwrap();
    sim.join("c", "a").unwrap();
    sim.run_until(30);

    sim.partition(&[vec!["a".into(), "b".into()], vec!["c".into()]]).unwrap();
    sim.run_until(70);
    sim.heal();
    sim.run_until(100);

    sim.trace()
        .iter()
        .filter(|l| l.contains(" unreachable ") || l.contains(" reachable ") || l.contains(" act - "))
        .cloned()
        .collect()
}

#[allow(dead_code)]
fn main() {
    for line in run_example() {
        println!("{line}");
    }
}
