use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use edgefs::scenario::{run, RunOptions, Scenario};
use edgefs::simnet::NetConfig;

#[derive(Parser)]
#[command(name = "edgefs", version, about = "Run edge file system scenarios on a simulated network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and check convergence.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Datagram loss probability in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        loss: f64,
        /// Message delay range in ticks, e.g. 1..3.
        #[arg(long, default_value = "1..3", value_parser = parse_delay)]
        delay: (u64, u64),
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn parse_delay(s: &str) -> Result<(u64, u64), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected MIN..MAX")?;
    let lo = lo.trim().parse().map_err(|_| format!("bad minimum {lo:?}"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad maximum {hi:?}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn run_file(
    file: &PathBuf,
    seed: u64,
    loss: f64,
    delay: (u64, u64),
    trace: Option<&PathBuf>,
    report: Option<&PathBuf>,
) -> Result<bool> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let scenario = Scenario::parse(&text).with_context(|| format!("parsing {}", file.display()))?;
    if !(0.0..1.0).contains(&loss) {
        bail!("--loss must be in [0, 1), got {loss}");
    }
    let opts = RunOptions {
        net: NetConfig { seed, delay_min: delay.0, delay_max: delay.1, loss_probability: loss, ..NetConfig::default() },
        ..RunOptions::default()
    };
    let outcome = run(&scenario, &opts)?;
    let report_text = outcome.report_text(&file.display().to_string(), &opts);
    if let Some(path) = trace {
        std::fs::write(path, &outcome.trace).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = report {
        std::fs::write(path, &report_text).with_context(|| format!("writing {}", path.display()))?;
    }

    for cp in &outcome.checkpoints {
        println!("checkpoint {} at tick {}: converged={}", cp.label, cp.tick, cp.converged);
    }
    if let Some(v) = &outcome.violation {
        println!("invariant violated at tick {} on {}: {}", v.first.tick, v.first.node, v.first.message);
        println!("shortest failing prefix ({} events):", v.prefix_len);
        print!("{}", v.prefix);
    }
    if let Some(r) = &outcome.final_report {
        println!("end at tick {}: converged={}", r.tick, r.converged);
        for n in &r.nodes {
            let conflicts = if n.conflicts.is_empty() { String::new() } else { format!(" conflicts={}", n.conflicts.join(",")) };
            println!(
                "  {} name={} files={} view={}{conflicts}",
                n.label,
                n.name.as_ref().map_or("-", |m| m.as_str()),
                n.files,
                &n.view_hash[..12]
            );
        }
        for d in &r.divergences {
            println!("  divergence: {d}");
        }
    }
    println!("{}", if outcome.passed() { "PASS" } else { "FAIL" });
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, seed, loss, delay, trace, report } => {
            match run_file(&file, seed, loss, delay, trace.as_ref(), report.as_ref()) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
