//! Runs a parsed scenario end to end.

use std::fmt::Write as _;

use super::checker::ConsistencyReport;
use super::sim::{SimError, Simulation, Violation};
use super::Scenario;
use crate::simnet::{DupPolicy, NetConfig, NetStats};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub net: NetConfig,
    pub check_invariants: bool,
    /// On an invariant violation, search for the shortest event prefix
    /// that still produces one.
    pub minimize: bool,
    pub dup_policy: DupPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { net: NetConfig::default(), check_invariants: true, minimize: true, dup_policy: DupPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationReport {
    pub first: Violation,
    /// Number of scenario events in the shortest failing prefix.
    pub prefix_len: usize,
    /// That prefix, in scenario syntax.
    pub prefix: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: String,
    pub checkpoints: Vec<ConsistencyReport>,
    /// Absent when the run was aborted by a violation.
    pub final_report: Option<ConsistencyReport>,
    pub violation: Option<ViolationReport>,
    pub digests: Vec<(String, String)>,
    pub net_stats: NetStats,
    pub events_processed: u64,
    pub end_tick: u64,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.violation.is_none() && self.final_report.as_ref().is_some_and(|r| r.converged)
    }

    pub fn report_text(&self, scenario_name: &str, opts: &RunOptions) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario={scenario_name}");
        let _ = writeln!(s, "seed={}", opts.net.seed);
        let _ = writeln!(s, "loss={}", opts.net.loss_probability);
        let _ = writeln!(s, "delay={}..{}", opts.net.delay_min, opts.net.delay_max);
        let _ = writeln!(s, "passed={}", self.passed());
        let _ = writeln!(s, "end_tick={}", self.end_tick);
        let _ = writeln!(s, "events={}", self.events_processed);
        let st = self.net_stats;
        let _ = writeln!(s, "net.sent={}", st.sent);
        let _ = writeln!(s, "net.delivered={}", st.delivered);
        let _ = writeln!(s, "net.dropped_loss={}", st.dropped_loss);
        let _ = writeln!(s, "net.dropped_partition={}", st.dropped_partition);
        let _ = writeln!(s, "net.duplicated={}", st.duplicated);
        for (label, digest) in &self.digests {
            let _ = writeln!(s, "state.{label}={digest}");
        }
        for cp in &self.checkpoints {
            s.push_str(&cp.to_kv());
        }
        if let Some(r) = &self.final_report {
            s.push_str(&r.to_kv());
        }
        if let Some(v) = &self.violation {
            let _ = writeln!(s, "violation.tick={}", v.first.tick);
            let _ = writeln!(s, "violation.node={}", v.first.node);
            let _ = writeln!(s, "violation.message={}", v.first.message);
            let _ = writeln!(s, "violation.prefix_len={}", v.prefix_len);
            for (i, line) in v.prefix.lines().enumerate() {
                let _ = writeln!(s, "violation.prefix.{i}={line}");
            }
        }
        s
    }
}

/// Plays the scenario and settles. Stops early at the first violation.
fn execute(scenario: &Scenario, opts: &RunOptions) -> Result<(Simulation, Vec<ConsistencyReport>), SimError> {
    let mut sim = Simulation::new(opts.net.clone(), scenario.reach)?;
    sim.set_check_invariants(opts.check_invariants);
    sim.set_dup_policy(opts.dup_policy);
    let mut checkpoints = Vec::new();
    for ev in &scenario.events {
        sim.run_until(ev.at);
        if !sim.violations().is_empty() {
            return Ok((sim, checkpoints));
        }
        if let Some(report) = sim.apply(&ev.action)? {
            checkpoints.push(report);
        }
    }
    if sim.violations().is_empty() {
        sim.settle();
    }
    Ok((sim, checkpoints))
}

pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome, SimError> {
    let (sim, checkpoints) = execute(scenario, opts)?;
    let violation = match sim.violations().first() {
        None => None,
        Some(first) => {
            let mut prefix_len = scenario.events.len();
            if opts.minimize {
                for n in 0..scenario.events.len() {
                    let (short, _) = execute(&scenario.prefix(n), opts)?;
                    if !short.violations().is_empty() {
                        prefix_len = n;
                        break;
                    }
                }
            }
            Some(ViolationReport { first: first.clone(), prefix_len, prefix: scenario.prefix(prefix_len).to_text() })
        }
    };
    let final_report = violation.is_none().then(|| sim.check("end"));
    Ok(RunOutcome {
        trace: sim.trace_text(),
        checkpoints,
        final_report,
        violation,
        digests: sim.digests(),
        net_stats: sim.net().stats(),
        events_processed: sim.events_processed(),
        end_tick: sim.now(),
    })
}
