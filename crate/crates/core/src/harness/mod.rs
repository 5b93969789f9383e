//! Deterministic scenario runner.
//!
//! [`run_scenario`] drives the logical clock from tick 0 to the scenario's
//! last tick. Each tick it delivers the scripted events in file order, lets
//! the pipeline advance, runs the monitor and finally calls governance. The
//! only randomness is a ChaCha generator seeded from the scenario, used by
//! `random_trades` events.

pub mod report;
pub mod runner;
pub mod scenario;

use std::io::BufReader;
use std::path::Path;

pub use report::{write_incidents_csv, write_outputs, ExpectationResult, RunReport};
pub use runner::{run_scenario, RunOutput, World};
pub use scenario::{Expectation, Scenario, ScenarioError, ScriptedEvent, TimelineEntry};

use crate::ledger::{verify_export, ExportError, VerifyReport};

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("case_study_happy", include_str!("../../scenarios/case_study_happy.yaml")),
    ("stale_appraisal", include_str!("../../scenarios/stale_appraisal.yaml")),
    ("cap_whitelist", include_str!("../../scenarios/cap_whitelist.yaml")),
    ("forged_appraisal", include_str!("../../scenarios/forged_appraisal.yaml")),
    ("forged_signature", include_str!("../../scenarios/forged_signature.yaml")),
    ("wash_trading", include_str!("../../scenarios/wash_trading.yaml")),
    ("agent_replacement", include_str!("../../scenarios/agent_replacement.yaml")),
    ("title_mismatch_unverified", include_str!("../../scenarios/title_mismatch_unverified.yaml")),
    ("market_noise", include_str!("../../scenarios/market_noise.yaml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Recomputes the hash chain of an exported ledger file.
pub fn replay_verify(path: &Path) -> Result<VerifyReport, ExportError> {
    let file = std::fs::File::open(path).map_err(ExportError::Io)?;
    verify_export(BufReader::new(file))
}
