//! Scenario files.
//!
//! A scenario is a YAML document:
//!
//! ```yaml
//! name: case_study_happy
//! seed: 7
//! ticks: 20                     # optional; defaults to last scripted tick + 10
//! params: { verification_quorum: 1 }   # overrides of GovernanceParams
//! auto_approve_governance: true
//! min_stake: { default: 1000, verification: 1000 }
//! oracles: { registry: [...], appraisals: [...], ... }
//! agents:
//!   - { id: ver-1, role: verification, stake: 1000 }
//! reassessments:
//!   ver-1: { outcome: replace, replacement: { id: ver-2, role: verification, stake: 1000 } }
//! timeline:
//!   - { tick: 1, type: submit, asset_id: bldg, ... }
//!   - { tick: 9, type: trade, token_id: OFFICE_X, from: alice, to: bob, amount: 10000, price: 4655 }
//! expectations:
//!   - { type: request_state, asset_id: bldg, state: Minted }
//! ```
//!
//! Timeline entries must be sorted by tick; entries sharing a tick run in
//! file order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::pipeline::{OwnerDecision, RequestState, Submission};
use crate::agents::AgentSpec;
use crate::governance::{IncidentClass, ReassessmentOutcome, ReassessmentPlan};
use crate::ledger::{GovernanceParams, ParamError, RejectReason, Restrictions};
use crate::oracle::{AppraisalDoc, OracleConfig};
use crate::staking::AgentStatus;
use crate::types::{Address, AgentId, AssetId, Cents, Fraction, IdentityId, Role, Tick, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ticks: Option<Tick>,
    #[serde(default)]
    pub params: GovernanceParams,
    #[serde(default = "yes")]
    pub auto_approve_governance: bool,
    #[serde(default)]
    pub min_stake: MinStake,
    /// Restriction profiles by jurisdiction; the built-in profiles are used
    /// when absent.
    #[serde(default)]
    pub jurisdictions: Option<BTreeMap<String, Restrictions>>,
    #[serde(default)]
    pub oracles: OracleConfig,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub reassessments: BTreeMap<AgentId, ReassessmentPlan>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub expectations: Vec<Expectation>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinStake {
    #[serde(default = "default_min_stake")]
    pub default: u64,
    #[serde(flatten)]
    pub per_role: BTreeMap<Role, u64>,
}

fn default_min_stake() -> u64 {
    1000
}

impl Default for MinStake {
    fn default() -> Self {
        MinStake { default: default_min_stake(), per_role: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: ScriptedEvent,
}

/// Something the outside world does at a given tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScriptedEvent {
    /// The owner submits an asset for tokenization.
    Submit(Submission),
    /// The owner supplies a new appraisal document.
    Reappraisal(AppraisalDoc),
    /// The owner answers a revised valuation.
    OwnerDecision { asset_id: AssetId, decision: OwnerDecision },
    /// An investor asks to be whitelisted for a token.
    WhitelistInvestor { token_id: TokenId, identity: IdentityId, address: Address },
    Trade {
        token_id: TokenId,
        from: Address,
        to: Address,
        amount: u64,
        price: Cents,
        #[serde(default)]
        via_agent: Option<AgentId>,
    },
    /// `count` trades between randomly chosen `addresses`, drawn from the
    /// scenario seed.
    RandomTrades {
        token_id: TokenId,
        addresses: Vec<Address>,
        count: u32,
        max_amount: u64,
        price_min: Cents,
        price_max: Cents,
    },
    ParamChange(crate::ledger::ParamUpdate),
    /// Human sign-off releasing queued governance interventions.
    GovernanceSignoff,
    Unfreeze {
        token_id: TokenId,
        #[serde(default)]
        reason: String,
    },
    GrantRevetting { agent_id: AgentId },
    TopUp { agent_id: AgentId, amount: u64 },
}

/// A check evaluated against the finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    RequestState { asset_id: AssetId, state: RequestState },
    TokenSupply { token_id: TokenId, supply: u64 },
    /// No token class was ever minted for the asset.
    NotMinted { asset_id: AssetId },
    IssuePrice { asset_id: AssetId, price: Cents },
    EffectiveValue { asset_id: AssetId, value: Cents },
    Balance { token_id: TokenId, address: Address, amount: u64 },
    IncidentCount {
        #[serde(default)]
        classification: Option<IncidentClass>,
        count: usize,
    },
    /// At least one rejected transfer matching the filter.
    TransferRejected {
        reason: RejectReason,
        #[serde(default)]
        to: Option<Address>,
    },
    Frozen { token_id: TokenId, frozen: bool },
    Blacklisted { token_id: TokenId, address: Address },
    Stake { agent_id: AgentId, stake: u64 },
    AgentStatus { agent_id: AgentId, status: AgentStatus },
    /// The agent's score was exactly `score` right after a penalty.
    TrustDroppedTo { agent_id: AgentId, score: Fraction },
    Reassessment { agent_id: AgentId, outcome: ReassessmentOutcome },
    /// A report of `classification` was reviewed and dropped unverified.
    ReportDropped { classification: crate::agents::Classification },
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("invalid oracle tables: {0}")]
    Oracles(#[from] crate::oracle::OracleConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_yaml(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_yaml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        if self.timeline.windows(2).any(|w| w[0].tick > w[1].tick) {
            return Err(ScenarioError::Invalid("timeline is not sorted by tick".into()));
        }
        if let (Some(ticks), Some(last)) = (self.ticks, self.timeline.last()) {
            if last.tick > ticks {
                return Err(ScenarioError::Invalid(format!("timeline entry at tick {} is past the last tick {ticks}", last.tick)));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        let replacements = self.reassessments.values().filter_map(|p| match p {
            ReassessmentPlan::Replace { replacement: Some(spec) } => Some(spec),
            _ => None,
        });
        for spec in self.agents.iter().chain(replacements) {
            if !ids.insert(&spec.id) {
                return Err(ScenarioError::Invalid(format!("agent id {} is used twice", spec.id)));
            }
        }
        for entry in &self.timeline {
            if let ScriptedEvent::RandomTrades { addresses, max_amount, price_min, price_max, .. } = &entry.event {
                if addresses.len() < 2 || *max_amount == 0 || price_min > price_max {
                    return Err(ScenarioError::Invalid(format!(
                        "random_trades at tick {} needs two addresses, a positive amount and a price range",
                        entry.tick
                    )));
                }
            }
        }
        Ok(())
    }

    /// Last tick the run covers.
    pub fn last_tick(&self) -> Tick {
        self.ticks.unwrap_or_else(|| self.timeline.last().map_or(0, |e| e.tick) + 10)
    }
}
