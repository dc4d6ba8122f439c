//! Scenario files, the simulation driver and the consistency checker.
//!
//! A scenario is line-oriented text. Each line is `tick action args...`;
//! `#` starts a comment and `set key value` lines adjust settings.
//!
//! ```text
//! set ping-period 5
//! 0   spawn a A            # bootstrap member named A
//! 0   spawn b quota=4096
//! 1   join b a
//! 10  create a /Jupiter.jpg
//! 20  partition a,b c      # groups; unlisted nodes are isolated
//! 40  heal
//! 41  rename b /Jupiter.jpg.CONFLICT.A Saturn.jpg
//! 42  write a /notes.txt hello
//! 43  read b /notes.txt
//! 44  dup a freq           # duplicate a's next freq message
//! 50  checkpoint after-heal
//! ```

pub mod checker;
pub mod random;
pub mod runner;
pub mod sim;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::metadata::MemberName;
use crate::node::LocalOp;
use crate::reachability::{ReachabilityConfig, DEFAULT_INACTIVITY_THRESHOLD, DEFAULT_PING_PERIOD};
use crate::simnet::wire::Tag;
use crate::simnet::Tick;

pub use checker::{expected_view, ConsistencyReport, ViewLine};
pub use runner::{run, RunOptions, RunOutcome};
pub use sim::Simulation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Spawn { node: String, bootstrap: Option<MemberName>, quota: Option<u64> },
    Join { node: String, host: String },
    Partition { groups: Vec<Vec<String>> },
    Heal,
    Op { node: String, op: LocalOp },
    Dup { node: String, tag: Option<Tag> },
    Checkpoint { label: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEvent {
    pub at: Tick,
    pub action: Action,
    /// 1-based source line, 0 for generated events.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub reach: ReachabilityConfig,
    pub events: Vec<ScenarioEvent>,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Spawn { node, bootstrap, quota } => {
                write!(f, "spawn {node}")?;
                if let Some(name) = bootstrap {
                    write!(f, " {name}")?;
                }
                if let Some(q) = quota {
                    write!(f, " quota={q}")?;
                }
                Ok(())
            }
            Action::Join { node, host } => write!(f, "join {node} {host}"),
            Action::Partition { groups } => {
                let groups: Vec<String> = groups.iter().map(|g| g.join(",")).collect();
                write!(f, "partition {}", groups.join(" "))
            }
            Action::Heal => write!(f, "heal"),
            Action::Op { node, op } => match op {
                LocalOp::Create { path } => write!(f, "create {node} {path}"),
                LocalOp::Delete { path } => write!(f, "delete {node} {path}"),
                LocalOp::Rename { path, new_name } => write!(f, "rename {node} {path} {new_name}"),
                LocalOp::Write { path, bytes } => write!(f, "write {node} {path} {}", String::from_utf8_lossy(bytes)),
                LocalOp::Read { path } => write!(f, "read {node} {path}"),
            },
            Action::Dup { node, tag } => match tag {
                Some(t) => write!(f, "dup {node} {t}"),
                None => write!(f, "dup {node}"),
            },
            Action::Checkpoint { label } => write!(f, "checkpoint {label}"),
        }
    }
}

impl Action {
    /// The node label an action is about, if any.
    pub fn node(&self) -> Option<&str> {
        match self {
            Action::Spawn { node, .. } | Action::Join { node, .. } | Action::Op { node, .. } | Action::Dup { node, .. } => {
                Some(node)
            }
            _ => None,
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ParseError> {
        let mut scenario = Scenario::default();
        let mut ping_period = DEFAULT_PING_PERIOD;
        let mut threshold = DEFAULT_INACTIVITY_THRESHOLD;
        let mut spawned = BTreeSet::new();
        let mut last_tick = 0;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ParseError { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens[0] == "set" {
                let [_, key, value] = tokens[..] else {
                    return Err(err("expected `set <key> <value>`".into()));
                };
                let n: u64 = value.parse().map_err(|_| err(format!("bad number {value:?}")))?;
                match key {
                    "ping-period" => ping_period = n,
                    "threshold" => threshold = u32::try_from(n).map_err(|_| err("threshold too large".into()))?,
                    other => return Err(err(format!("unknown setting {other:?}"))),
                }
                continue;
            }

            let at: Tick = tokens[0].parse().map_err(|_| err(format!("bad tick {:?}", tokens[0])))?;
            if at < last_tick {
                return Err(err(format!("tick {at} goes backwards (previous {last_tick})")));
            }
            last_tick = at;
            let verb = *tokens.get(1).ok_or_else(|| err("missing action".into()))?;
            let args = &tokens[2..];
            let arity = |min: usize, max: usize| {
                if args.len() < min || args.len() > max {
                    Err(err(format!("{verb} takes {min}..={max} arguments, got {}", args.len())))
                } else {
                    Ok(())
                }
            };
            let known = |label: &str| {
                if spawned.contains(label) {
                    Ok(label.to_string())
                } else {
                    Err(err(format!("node {label:?} used before spawn")))
                }
            };

            let action = match verb {
                "spawn" => {
                    arity(1, 3)?;
                    let node = args[0].to_string();
                    if !spawned.insert(node.clone()) {
                        return Err(err(format!("node {node:?} spawned twice")));
                    }
                    let mut bootstrap = None;
                    let mut quota = None;
                    for extra in &args[1..] {
                        if let Some(q) = extra.strip_prefix("quota=") {
                            quota = Some(q.parse().map_err(|_| err(format!("bad quota {q:?}")))?);
                        } else {
                            bootstrap =
                                Some(MemberName::new(*extra).map_err(|e| err(format!("bad bootstrap name: {e}")))?);
                        }
                    }
                    Action::Spawn { node, bootstrap, quota }
                }
                "join" => {
                    arity(2, 2)?;
                    Action::Join { node: known(args[0])?, host: known(args[1])? }
                }
                "partition" => {
                    if args.is_empty() {
                        return Err(err("partition needs at least one group".into()));
                    }
                    let mut groups = Vec::new();
                    for g in args {
                        groups.push(g.split(',').filter(|s| !s.is_empty()).map(known).collect::<Result<Vec<_>, _>>()?);
                    }
                    Action::Partition { groups }
                }
                "heal" => {
                    arity(0, 0)?;
                    Action::Heal
                }
                "create" | "delete" | "read" => {
                    arity(2, 2)?;
                    let path = args[1].to_string();
                    let op = match verb {
                        "create" => LocalOp::Create { path },
                        "delete" => LocalOp::Delete { path },
                        _ => LocalOp::Read { path },
                    };
                    Action::Op { node: known(args[0])?, op }
                }
                "rename" => {
                    arity(3, 3)?;
                    let op = LocalOp::Rename { path: args[1].to_string(), new_name: args[2].to_string() };
                    Action::Op { node: known(args[0])?, op }
                }
                "write" => {
                    arity(3, 3)?;
                    let op = LocalOp::Write { path: args[1].to_string(), bytes: args[2].as_bytes().to_vec() };
                    Action::Op { node: known(args[0])?, op }
                }
                "dup" => {
                    arity(1, 2)?;
                    let tag = match args.get(1) {
                        None => None,
                        Some(t) => {
                            let raw: [u8; 4] =
                                t.as_bytes().try_into().map_err(|_| err(format!("bad protocol tag {t:?}")))?;
                            Some(Tag::from_bytes(raw).ok_or_else(|| err(format!("unknown protocol tag {t:?}")))?)
                        }
                    };
                    Action::Dup { node: known(args[0])?, tag }
                }
                "checkpoint" => {
                    arity(1, 1)?;
                    Action::Checkpoint { label: args[0].to_string() }
                }
                other => return Err(err(format!("unknown action {other:?}"))),
            };
            scenario.events.push(ScenarioEvent { at, action, line });
        }

        scenario.reach = ReachabilityConfig::new(ping_period, threshold)
            .ok_or(ParseError { line: 0, message: "ping-period and threshold must be positive".into() })?;
        Ok(scenario)
    }

    /// Renders the scenario back into the text format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "set ping-period {}\nset threshold {}\n",
            self.reach.ping_period, self.reach.inactivity_threshold
        );
        for ev in &self.events {
            s.push_str(&format!("{} {}\n", ev.at, ev.action));
        }
        s
    }

    /// The first `n` events, same settings.
    pub fn prefix(&self, n: usize) -> Scenario {
        Scenario { reach: self.reach, events: self.events[..n.min(self.events.len())].to_vec() }
    }
}
