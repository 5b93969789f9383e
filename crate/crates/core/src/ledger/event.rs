use std::fmt;

use serde::{Deserialize, Serialize};

use super::encoding::Digest;
use crate::types::{Address, AgentId, AssetId, Cents, Role, Tick, TokenId};

/// One immutable entry of the append-only log.
///
/// Serializes as `{seq, tick, kind, payload, hash}`, which is also the NDJSON
/// export line format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub body: EventBody,
    pub hash: Digest,
}

impl LedgerEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Mint,
    Transfer,
    TransferRejected,
    Freeze,
    Unfreeze,
    Slash,
    IncidentRecord,
    ParamChange,
    WhitelistChange,
    ApprovalRecord,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Mint => "Mint",
            EventKind::Transfer => "Transfer",
            EventKind::TransferRejected => "TransferRejected",
            EventKind::Freeze => "Freeze",
            EventKind::Unfreeze => "Unfreeze",
            EventKind::Slash => "Slash",
            EventKind::IncidentRecord => "IncidentRecord",
            EventKind::ParamChange => "ParamChange",
            EventKind::WhitelistChange => "WhitelistChange",
            EventKind::ApprovalRecord => "ApprovalRecord",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    Mint(MintRecord),
    Transfer(TransferRecord),
    TransferRejected(RejectedTransfer),
    Freeze(FreezeRecord),
    Unfreeze(FreezeRecord),
    Slash(SlashRecord),
    IncidentRecord(IncidentEntry),
    ParamChange(ParamChangeRecord),
    WhitelistChange(WhitelistRecord),
    ApprovalRecord(ApprovalEntry),
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::Mint(_) => EventKind::Mint,
            EventBody::Transfer(_) => EventKind::Transfer,
            EventBody::TransferRejected(_) => EventKind::TransferRejected,
            EventBody::Freeze(_) => EventKind::Freeze,
            EventBody::Unfreeze(_) => EventKind::Unfreeze,
            EventBody::Slash(_) => EventKind::Slash,
            EventBody::IncidentRecord(_) => EventKind::IncidentRecord,
            EventBody::ParamChange(_) => EventKind::ParamChange,
            EventBody::WhitelistChange(_) => EventKind::WhitelistChange,
            EventBody::ApprovalRecord(_) => EventKind::ApprovalRecord,
        }
    }

    /// The payload alone, as it is hashed and exported.
    pub fn payload_value(&self) -> serde_json::Value {
        let tagged = serde_json::to_value(self).expect("event payloads always serialize");
        match tagged {
            serde_json::Value::Object(mut map) => map.remove("payload").unwrap_or_default(),
            _ => unreachable!("adjacently tagged enum serializes as an object"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MintRecord {
    pub token_id: TokenId,
    pub asset_id: AssetId,
    pub owner: Address,
    pub total_supply: u64,
    pub max_holding_bp: u32,
    pub accredited_only: bool,
    pub whitelist_required: bool,
    pub issue_price: Cents,
    pub metadata_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub token_id: TokenId,
    pub from: Address,
    pub to: Address,
    pub amount: u64,
    pub price: Cents,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_agent: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    UnknownToken,
    Frozen,
    ZeroAmount,
    NotWhitelisted,
    InsufficientBalance,
    ExceedsHoldingCap,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedTransfer {
    #[serde(flatten)]
    pub transfer: TransferRecord,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeRecord {
    pub token_id: TokenId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashRecord {
    pub agent_id: AgentId,
    pub amount_bp: u32,
    pub slashed: u64,
    pub stake_after: u64,
    pub reason: String,
}

/// On-ledger form of a governance incident.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentEntry {
    pub incident_id: u64,
    pub classification: String,
    pub subject: String,
    pub source_reports: Vec<String>,
    pub responsible_agents: Vec<AgentId>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamChangeRecord {
    pub field: String,
    pub old: String,
    pub new: String,
    pub effective_tick: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitelistOp {
    Add,
    /// Plain removal; only permitted for addresses holding nothing.
    Remove,
    /// Governance override: removal regardless of holdings. The address is
    /// also barred from being re-added by compliance.
    Blacklist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitelistRecord {
    pub token_id: TokenId,
    pub address: Address,
    pub op: WhitelistOp,
    pub by_governance: bool,
}

/// What an `ApprovalRecord` attests to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalAction {
    RequestApproved,
    RequestRejected,
    AgentCertified,
    StakeReward,
    StakeTopUp,
    AgentRecertified,
    AgentBarred,
    AgentReplaced,
    GovernanceSignoff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalEntry {
    pub action: ApprovalAction,
    /// Asset, agent or other subject the record is about.
    pub subject: String,
    pub agent_id: AgentId,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}
