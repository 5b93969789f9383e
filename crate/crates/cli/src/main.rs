use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tokengov::harness::{bundled, replay_verify, run_scenario, write_outputs, Scenario, BUNDLED};
use tokengov::ledger::VerifyStatus;

#[derive(Parser)]
#[command(name = "tokengov", version, about = "Run and audit tokenization governance scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name).
    Run {
        scenario: String,
        /// Directory for ledger.ndjson, report.json and incidents.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the hash chain of an exported ledger.
    Verify { ledger: PathBuf },
    /// List the bundled scenarios.
    ListScenarios,
}

const EXIT_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;

fn load(arg: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?
    } else if let Some(text) = bundled(arg) {
        text.to_owned()
    } else {
        anyhow::bail!("no scenario file or bundled scenario named {arg}");
    };
    Ok(Scenario::from_yaml(&text)?)
}

fn run(scenario: &str, out: &Path, seed: Option<u64>) -> ExitCode {
    let mut scenario = match load(scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = match run_scenario(&scenario) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    };
    if let Err(e) = write_outputs(out, &output) {
        eprintln!("error: writing outputs to {}: {e}", out.display());
        return ExitCode::from(EXIT_FAILED);
    }
    let report = &output.report;
    println!(
        "{}: {} events, {} incidents, final hash {}",
        report.scenario,
        report.event_count,
        report.incidents.len(),
        report.final_chain_hash
    );
    for e in &report.expectations {
        let mark = if e.passed { "ok  " } else { "FAIL" };
        println!("  {mark} {} ({})", e.expectation, e.detail);
    }
    for e in &report.script_errors {
        println!("  script error at tick {}: {}", e.tick, e.error);
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn verify(path: &Path) -> ExitCode {
    match replay_verify(path) {
        Ok(report) => match report.status {
            VerifyStatus::Ok => {
                let tail = if report.truncated_tail { " (truncated final line ignored)" } else { "" };
                println!("{}: {} events verified, head {}{tail}", path.display(), report.verified, report.head);
                ExitCode::SUCCESS
            }
            VerifyStatus::Mismatch { seq, reason } => {
                println!("{}: chain broken at seq {seq}: {reason} ({} events verified before it)", path.display(), report.verified);
                ExitCode::from(EXIT_FAILED)
            }
        },
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, out, seed } => run(&scenario, &out, seed),
        Command::Verify { ledger } => verify(&ledger),
        Command::ListScenarios => {
            for (name, text) in BUNDLED {
                let description = Scenario::from_yaml(text).map(|s| s.description).unwrap_or_default();
                println!("{name:<28} {}", description.split_whitespace().collect::<Vec<_>>().join(" "));
            }
            ExitCode::SUCCESS
        }
    }
}
