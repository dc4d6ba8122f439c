//! Generates seeded random scenarios, runs them and prints the report of
//! the first one. The scenario text can be saved and replayed with the
//! `edgefs run` command.

use edgefs::scenario::random::{random_scenario, RandomParams};
use edgefs::scenario::{run, RunOptions};

pub fn run_example() -> (usize, String) {
    let params = RandomParams { max_nodes: 6, max_events: 40, max_loss: 0.2 };
    let mut converged = 0;
    let mut first_report = String::new();
    for seed in 0..10 {
        let (scenario, net) = random_scenario(seed, params);
        let opts = RunOptions { net, ..RunOptions::default() };
        let outcome = run(&scenario, &opts).unwrap();
        if outcome.passed() {
            converged += 1;
        }
        if seed == 0 {
            first_report = format!("{}\n{}", scenario.to_text(), outcome.report_text("random-0", &opts));
        }
    }
    (converged, first_report)
}

#[allow(dead_code)]
fn main() {
    let (converged, report) = run_example();
    println!("{report}");
    println!("{converged}/10 random scenarios converged");
}
