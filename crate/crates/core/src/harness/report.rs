//! Run reports and output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::runner::{RunOutput, ScriptError, WhitelistDecision, World};
use super::scenario::{Expectation, Scenario};
use crate::agents::pipeline::{RequestState, TraceEntry};
use crate::agents::AgentReport;
use crate::governance::trust::{TrustEvent, TrustScore};
use crate::governance::{Incident, ReassessmentOutcome, Review, ReviewOutcome};
use crate::ledger::{Digest, EventBody, Ledger, RejectReason};
use crate::staking::{AgentRecord, StakeTotals};
use crate::types::{Address, AgentId, AssetId, Cents, Tick, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedTransferRow {
    pub seq: u64,
    pub tick: Tick,
    pub token_id: TokenId,
    pub from: Address,
    pub to: Address,
    pub amount: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestSummary {
    pub asset_id: AssetId,
    pub token_id: TokenId,
    pub state: RequestState,
    pub declared_value: Cents,
    pub estimate: Option<Cents>,
    pub effective_value: Option<Cents>,
    pub issue_price: Option<Cents>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectationResult {
    pub expectation: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimedAction {
    pub tick: Tick,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReassessmentRow {
    pub tick: Tick,
    pub agent_id: AgentId,
    pub outcome: Option<ReassessmentOutcome>,
    pub error: Option<String>,
}

/// Machine-readable summary of a run. Contains no wall-clock data, so two
/// runs of the same scenario produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub last_tick: Tick,
    pub final_chain_hash: Digest,
    pub event_count: usize,
    pub requests: Vec<RequestSummary>,
    pub incidents: Vec<Incident>,
    pub rejected_transfers: Vec<RejectedTransferRow>,
    pub whitelist_decisions: Vec<WhitelistDecision>,
    pub stakes: Vec<AgentRecord>,
    pub stake_totals: StakeTotals,
    pub trust_scores: BTreeMap<AgentId, TrustScore>,
    pub trust_events: Vec<TrustEvent>,
    pub findings: Vec<AgentReport>,
    pub reviews: Vec<Review>,
    pub actions: Vec<TimedAction>,
    pub reassessments: Vec<ReassessmentRow>,
    pub param_errors: Vec<String>,
    pub script_errors: Vec<ScriptError>,
    pub expectations: Vec<ExpectationResult>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }
}

pub fn rejected_transfers(ledger: &Ledger) -> Vec<RejectedTransferRow> {
    ledger
        .events()
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::TransferRejected(r) => Some(RejectedTransferRow {
                seq: e.seq,
                tick: e.tick,
                token_id: r.transfer.token_id.clone(),
                from: r.transfer.from.clone(),
                to: r.transfer.to.clone(),
                amount: r.transfer.amount,
                reason: r.reason,
            }),
            _ => None,
        })
        .collect()
}

pub(super) fn build(scenario: &Scenario, world: &World, last_tick: Tick) -> RunReport {
    let gov = &world.governance;
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        last_tick,
        final_chain_hash: world.ledger.head(),
        event_count: world.ledger.events().len(),
        requests: world
            .pipeline
            .requests()
            .map(|r| RequestSummary {
                asset_id: r.submission.asset_id.clone(),
                token_id: r.submission.token_id.clone(),
                state: r.state,
                declared_value: r.declared_value,
                estimate: r.estimate,
                effective_value: r.effective_value,
                issue_price: r.issue_price,
                trace: r.trace.clone(),
            })
            .collect(),
        incidents: gov.incidents().to_vec(),
        rejected_transfers: rejected_transfers(&world.ledger),
        whitelist_decisions: world.whitelist.clone(),
        stakes: world.staking.agents().cloned().collect(),
        stake_totals: world.staking.totals(),
        trust_scores: gov.trust().scores().clone(),
        trust_events: gov.trust().events().to_vec(),
        findings: world.reports.iter().filter(|r| !r.is_approval()).cloned().collect(),
        reviews: gov.reviews().to_vec(),
        actions: world.actions.iter().map(|(t, a)| TimedAction { tick: *t, action: a.to_string() }).collect(),
        reassessments: gov
            .reassessments()
            .iter()
            .map(|(tick, agent_id, r)| ReassessmentRow {
                tick: *tick,
                agent_id: agent_id.clone(),
                outcome: r.as_ref().ok().copied(),
                error: r.as_ref().err().map(ToString::to_string),
            })
            .collect(),
        param_errors: gov.param_errors().iter().map(|(t, e)| format!("tick {t}: {e}")).collect(),
        script_errors: world.script_errors.clone(),
        expectations: Vec::new(),
    };
    report.expectations = scenario.expectations.iter().map(|e| evaluate(e, &report, &world.ledger)).collect();
    report
}

fn check(expectation: &Expectation, passed: bool, detail: String) -> ExpectationResult {
    ExpectationResult { expectation: describe(expectation), passed, detail }
}

fn describe(e: &Expectation) -> String {
    serde_json::to_string(e).expect("expectations serialize")
}

/// Evaluates one expectation against the finished run.
pub fn evaluate(e: &Expectation, report: &RunReport, ledger: &Ledger) -> ExpectationResult {
    let request = |asset: &AssetId| report.requests.iter().find(|r| &r.asset_id == asset);
    match e {
        Expectation::RequestState { asset_id, state } => {
            let got = request(asset_id).map(|r| r.state);
            check(e, got == Some(*state), format!("state {got:?}"))
        }
        Expectation::TokenSupply { token_id, supply } => {
            let got = ledger.token(token_id).map(|c| c.total_supply);
            check(e, got == Some(*supply), format!("supply {got:?}"))
        }
        Expectation::NotMinted { asset_id } => {
            let minted = ledger.events().iter().any(|ev| matches!(&ev.body, EventBody::Mint(m) if &m.asset_id == asset_id));
            check(e, !minted, format!("minted {minted}"))
        }
        Expectation::IssuePrice { asset_id, price } => {
            let got = request(asset_id).and_then(|r| r.issue_price);
            check(e, got == Some(*price), format!("price {got:?}"))
        }
        Expectation::EffectiveValue { asset_id, value } => {
            let got = request(asset_id).and_then(|r| r.effective_value);
            check(e, got == Some(*value), format!("effective value {got:?}"))
        }
        Expectation::Balance { token_id, address, amount } => {
            let got = ledger.token(token_id).map(|c| c.balance(address));
            check(e, got == Some(*amount), format!("balance {got:?}"))
        }
        Expectation::IncidentCount { classification, count } => {
            let got = report.incidents.iter().filter(|i| classification.is_none_or(|c| i.classification == c)).count();
            check(e, got == *count, format!("{got} incidents"))
        }
        Expectation::TransferRejected { reason, to } => {
            let got = report
                .rejected_transfers
                .iter()
                .filter(|r| r.reason == *reason && to.as_ref().is_none_or(|t| &r.to == t))
                .count();
            check(e, got > 0, format!("{got} matching rejections"))
        }
        Expectation::Frozen { token_id, frozen } => {
            let got = ledger.token(token_id).map(|c| c.frozen);
            check(e, got == Some(*frozen), format!("frozen {got:?}"))
        }
        Expectation::Blacklisted { token_id, address } => {
            let got = ledger.token(token_id).is_some_and(|c| c.blacklist.contains(address));
            check(e, got, format!("blacklisted {got}"))
        }
        Expectation::Stake { agent_id, stake } => {
            let got = report.stakes.iter().find(|s| &s.agent_id == agent_id).map(|s| s.stake);
            check(e, got == Some(*stake), format!("stake {got:?}"))
        }
        Expectation::AgentStatus { agent_id, status } => {
            let got = report.stakes.iter().find(|s| &s.agent_id == agent_id).map(|s| s.status);
            check(e, got == Some(*status), format!("status {got:?}"))
        }
        Expectation::TrustDroppedTo { agent_id, score } => {
            let drops: Vec<String> = report
                .trust_events
                .iter()
                .filter(|t| &t.agent_id == agent_id && t.after < t.before)
                .map(|t| t.after.to_string())
                .collect();
            let passed = drops.contains(&score.to_string());
            check(e, passed, format!("drops to [{}]", drops.join(", ")))
        }
        Expectation::Reassessment { agent_id, outcome } => {
            let got: Vec<_> = report.reassessments.iter().filter(|r| &r.agent_id == agent_id).collect();
            let passed = got.iter().any(|r| r.outcome == Some(*outcome));
            check(e, passed, format!("{got:?}"))
        }
        Expectation::ReportDropped { classification } => {
            let suffix = format!(":{classification}");
            let passed = report.reviews.iter().any(|r| r.outcome == ReviewOutcome::Dropped && r.report.ends_with(&suffix));
            check(e, passed, format!("dropped {passed}"))
        }
    }
}

/// Writes `ledger.ndjson`, `report.json` and `incidents.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut ledger_file = BufWriter::new(File::create(dir.join("ledger.ndjson"))?);
    out.ledger.export_ndjson(&mut ledger_file)?;
    ledger_file.flush()?;

    let mut report_file = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut report_file, &out.report)?;
    report_file.write_all(b"\n")?;
    report_file.flush()?;

    write_incidents_csv(File::create(dir.join("incidents.csv"))?, &out.report.incidents)
}

/// Incident summary with columns `tick, classification, subject, actions`.
pub fn write_incidents_csv<W: Write>(out: W, incidents: &[Incident]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "classification", "subject", "actions"])?;
    for i in incidents {
        let actions: Vec<String> = i.actions_taken.iter().map(ToString::to_string).collect();
        w.write_record([
            i.tick.to_string(),
            i.classification.to_string(),
            i.subject.to_string(),
            actions.join(";"),
        ])?;
    }
    w.flush()
}
