//! Functional agents.
//!
//! [`pipeline`] drives tokenization requests through verification,
//! valuation, compliance and issuance; [`monitor`] watches post-issuance
//! trading. Both communicate with governance only through [`AgentReport`]s.

pub mod monitor;
pub mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::staking::StakeRegistry;
use crate::types::{Address, AgentId, AssetId, Role, Tick, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Flag,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    TitleMismatch,
    LienFound,
    DoubleTokenization,
    StaleAppraisal,
    ValueDiscrepancy,
    InsufficientData,
    ForgedDocument,
    KycFail,
    NotAccredited,
    AmlHit,
    VolumeSpike,
    WashTrading,
    RapidResale,
    FlaggedCounterparty,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What a report is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Subject {
    Asset(AssetId),
    Token(TokenId),
    Address(Address),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Asset(a) => write!(f, "asset:{a}"),
            Subject::Token(t) => write!(f, "token:{t}"),
            Subject::Address(a) => write!(f, "address:{a}"),
        }
    }
}

/// Supporting facts attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub addresses: Vec<Address>,
    /// Agents that routed the trades in question, if any.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl Evidence {
    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.insert(key.to_owned(), value.to_string());
        self
    }
}

/// Approval (`Info`) or finding (`Flag`/`Critical`) emitted by an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent_id: AgentId,
    pub subject: Subject,
    pub severity: Severity,
    /// Always present for `Flag` and `Critical`; absent for `Info`.
    pub classification: Option<Classification>,
    pub evidence: Evidence,
    pub tick: Tick,
}

impl AgentReport {
    pub fn info(agent_id: &AgentId, subject: Subject, tick: Tick) -> Self {
        AgentReport {
            agent_id: agent_id.clone(),
            subject,
            severity: Severity::Info,
            classification: None,
            evidence: Evidence::default(),
            tick,
        }
    }

    pub fn finding(
        agent_id: &AgentId,
        subject: Subject,
        severity: Severity,
        classification: Classification,
        tick: Tick,
    ) -> Self {
        assert!(severity != Severity::Info, "findings are Flag or Critical");
        AgentReport {
            agent_id: agent_id.clone(),
            subject,
            severity,
            classification: Some(classification),
            evidence: Evidence::default(),
            tick,
        }
    }

    pub fn with_evidence(mut self, evidence: Evidence) -> Self {
        self.evidence = evidence;
        self
    }

    pub fn is_approval(&self) -> bool {
        self.severity == Severity::Info
    }

    /// Short reference used in incident records, e.g.
    /// `val-1@12:ValueDiscrepancy`.
    pub fn reference(&self) -> String {
        match self.classification {
            Some(c) => format!("{}@{}:{c}", self.agent_id, self.tick),
            None => format!("{}@{}:approval", self.agent_id, self.tick),
        }
    }
}

/// How a scripted agent behaves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    /// Approves everything without running its checks.
    Colluding,
}

/// A configured agent in the roster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    pub role: Role,
    pub stake: u64,
    #[serde(default)]
    pub behavior: Behavior,
}

/// The configured agents in service order, plus the set governance has put
/// under review. Agents under review, suspended or barred are skipped.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    agents: Vec<AgentSpec>,
    under_review: BTreeSet<AgentId>,
}

impl Roster {
    pub fn new(agents: Vec<AgentSpec>) -> Self {
        Roster { agents, under_review: BTreeSet::new() }
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn get(&self, id: &AgentId) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn add(&mut self, spec: AgentSpec) {
        self.agents.push(spec);
    }

    pub fn behavior(&self, id: &AgentId) -> Behavior {
        self.get(id).map(|a| a.behavior).unwrap_or_default()
    }

    pub fn set_under_review(&mut self, id: &AgentId, review: bool) {
        if review {
            self.under_review.insert(id.clone());
        } else {
            self.under_review.remove(id);
        }
    }

    pub fn is_under_review(&self, id: &AgentId) -> bool {
        self.under_review.contains(id)
    }

    /// Agents of `role` able to act now, in roster order.
    pub fn eligible<'a>(&'a self, role: Role, staking: &'a StakeRegistry) -> impl Iterator<Item = &'a AgentSpec> {
        self.agents
            .iter()
            .filter(move |a| a.role == role && staking.is_certified(&a.id) && !self.under_review.contains(&a.id))
    }
}
