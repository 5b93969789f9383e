//! Simulated blockchain layer.
//!
//! The [`Ledger`] owns an append-only, hash-chained event log together with
//! the state the log describes: token classes, their transfer restrictions,
//! the pending-request approval registry and the governance parameter store.
//! Every state change appends exactly one event, so the log alone is a
//! complete audit trail.
//!
//! Powers that belong to the governance contract (freezing, blacklisting,
//! slash records, incident records, parameter changes) require a
//! [`GovernanceCap`]. Whitelist additions require a [`ComplianceCap`] or the
//! governance capability. Both are handed out once by [`Ledger::new`].

mod encoding;
mod event;
mod export;
mod params;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use encoding::{chain_hash, encode_canonical, Digest};
pub use event::{
    ApprovalAction, ApprovalEntry, EventBody, EventKind, FreezeRecord, IncidentEntry,
    LedgerEvent, MintRecord, ParamChangeRecord, RejectReason, RejectedTransfer, SlashRecord,
    TransferRecord, WhitelistOp, WhitelistRecord,
};
pub use export::{verify_export, ExportError, VerifyReport, VerifyStatus};
pub use params::{GovernanceParams, ParamError, ParamUpdate};

use crate::types::{apply_bp_floor, Address, AgentId, AssetId, Cents, Role, Tick, TokenId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LedgerError {
    #[error("asset {0} already has a token class")]
    DoubleTokenization(AssetId),
    #[error("token id {0} is already in use")]
    TokenIdTaken(TokenId),
    #[error("tokenization request for {0} does not hold the required approvals")]
    NotApproved(AssetId),
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("{address} still holds {amount} units of {token}")]
    HoldingsNonZero { token: TokenId, address: Address, amount: u64 },
    #[error("{0} is blacklisted and can only be re-admitted by governance")]
    Blacklisted(Address),
    #[error("operation requires the governance capability")]
    Unauthorized,
    #[error("invalid mint: {0}")]
    InvalidMint(&'static str),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Capability for governance-contract powers. Not constructible outside
/// [`Ledger::new`].
#[derive(Debug)]
pub struct GovernanceCap {
    _private: (),
}

/// Capability for compliance-agent whitelist management.
#[derive(Debug)]
pub struct ComplianceCap {
    _private: (),
}

#[derive(Debug)]
pub struct Capabilities {
    pub governance: GovernanceCap,
    pub compliance: ComplianceCap,
}

mod sealed {
    pub trait Sealed {}
    impl Sealed for super::GovernanceCap {}
    impl Sealed for super::ComplianceCap {}
}

/// Either capability may edit whitelists; only governance may override.
pub trait WhitelistAuthority: sealed::Sealed {
    fn is_governance(&self) -> bool;
}

impl WhitelistAuthority for GovernanceCap {
    fn is_governance(&self) -> bool {
        true
    }
}

impl WhitelistAuthority for ComplianceCap {
    fn is_governance(&self) -> bool {
        false
    }
}

/// Transfer restrictions attached to a token class at mint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Restrictions {
    pub whitelist_required: bool,
    pub accredited_only: bool,
    pub max_holding_bp: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenClass {
    pub token_id: TokenId,
    pub asset_id: AssetId,
    /// The minting owner. Exempt from the holding cap, since it starts with
    /// the whole supply.
    pub issuer: Address,
    pub total_supply: u64,
    pub holdings: BTreeMap<Address, u64>,
    pub whitelist: BTreeSet<Address>,
    pub blacklist: BTreeSet<Address>,
    pub restrictions: Restrictions,
    pub frozen: bool,
    pub metadata_hash: String,
    pub issue_price: Cents,
}

impl TokenClass {
    /// `floor(total_supply × max_holding_bp / 10000)`.
    pub fn holding_cap(&self) -> u64 {
        apply_bp_floor(self.total_supply, self.restrictions.max_holding_bp)
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.holdings.get(address).copied().unwrap_or(0)
    }

    pub fn is_whitelisted(&self, address: &Address) -> bool {
        self.whitelist.contains(address)
    }

    /// Checks the class invariants, returning a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let sum: u128 = self.holdings.values().map(|&v| u128::from(v)).sum();
        if sum != u128::from(self.total_supply) {
            return Err(format!("holdings sum {sum} != supply {}", self.total_supply));
        }
        let cap = self.holding_cap();
        for (addr, &amount) in &self.holdings {
            if amount == 0 {
                return Err(format!("zero holding entry for {addr}"));
            }
            if !self.whitelist.contains(addr) && !self.blacklist.contains(addr) {
                return Err(format!("{addr} holds {amount} but is not whitelisted"));
            }
            if addr != &self.issuer && amount > cap {
                return Err(format!("{addr} holds {amount} above cap {cap}"));
            }
        }
        Ok(())
    }
}

/// A transfer as submitted to the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct TransferOrder {
    pub token_id: TokenId,
    pub from: Address,
    pub to: Address,
    pub amount: u64,
    #[serde(default)]
    pub price: Cents,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_agent: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum TransferOutcome {
    Accepted,
    Rejected(RejectReason),
}

impl TransferOutcome {
    pub fn is_accepted(self) -> bool {
        matches!(self, TransferOutcome::Accepted)
    }
}

/// Mint parameters supplied by the tokenization agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MintRequest {
    pub asset_id: AssetId,
    pub token_id: TokenId,
    pub total_supply: u64,
    pub owner: Address,
    pub restrictions: Restrictions,
    pub metadata_hash: String,
    pub issue_price: Cents,
}

/// Approval state of a tokenization request as recorded on the ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RequestApprovals {
    pub approvals: BTreeMap<AgentId, Role>,
    pub rejected: bool,
}

impl RequestApprovals {
    pub fn count(&self, role: Role) -> usize {
        self.approvals.values().filter(|&&r| r == role).count()
    }

    /// Quorum verification approvals plus one valuation and one compliance
    /// approval, and never rejected.
    pub fn satisfies(&self, quorum: u32) -> bool {
        !self.rejected
            && self.count(Role::Verification) >= quorum as usize
            && self.count(Role::Valuation) >= 1
            && self.count(Role::Compliance) >= 1
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    events: Vec<LedgerEvent>,
    head: Digest,
    tick: Tick,
    tokens: BTreeMap<TokenId, TokenClass>,
    by_asset: BTreeMap<AssetId, TokenId>,
    requests: BTreeMap<AssetId, RequestApprovals>,
    params: GovernanceParams,
    staged: Option<(Tick, GovernanceParams)>,
}

impl Ledger {
    pub fn new(params: GovernanceParams) -> Result<(Self, Capabilities), ParamError> {
        params.validate()?;
        let ledger = Ledger {
            events: Vec::new(),
            head: Digest::ZERO,
            tick: 0,
            tokens: BTreeMap::new(),
            by_asset: BTreeMap::new(),
            requests: BTreeMap::new(),
            params,
            staged: None,
        };
        let caps = Capabilities {
            governance: GovernanceCap { _private: () },
            compliance: ComplianceCap { _private: () },
        };
        Ok((ledger, caps))
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Hash of the latest event, or all zeros on an empty ledger.
    pub fn head(&self) -> Digest {
        self.head
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn params(&self) -> &GovernanceParams {
        &self.params
    }

    pub fn token(&self, id: &TokenId) -> Option<&TokenClass> {
        self.tokens.get(id)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenClass> {
        self.tokens.values()
    }

    pub fn token_for_asset(&self, asset: &AssetId) -> Option<&TokenId> {
        self.by_asset.get(asset)
    }

    pub fn request_approvals(&self, asset: &AssetId) -> Option<&RequestApprovals> {
        self.requests.get(asset)
    }

    /// Advances the logical clock and activates parameter changes staged
    /// during earlier ticks.
    pub fn begin_tick(&mut self, tick: Tick) {
        debug_assert!(tick >= self.tick, "logical time never goes backwards");
        self.tick = tick;
        if self.staged.as_ref().is_some_and(|(at, _)| *at < tick) {
            self.params = self.staged.take().expect("checked").1;
        }
    }

    /// Appends an event with the next sequence number and chained hash.
    pub(crate) fn append_event(&mut self, body: EventBody) -> LedgerEvent {
        let seq = self.events.len() as u64;
        let kind = body.kind();
        let hash = chain_hash(&self.head, seq, self.tick, kind.as_str(), &body.payload_value());
        let event = LedgerEvent { seq, tick: self.tick, body, hash };
        self.head = hash;
        self.events.push(event.clone());
        event
    }

    /// Records an agent approval (or other audit record). Request approvals
    /// also update the approval registry that gates minting.
    pub fn record_approval(&mut self, entry: ApprovalEntry) -> LedgerEvent {
        match entry.action {
            ApprovalAction::RequestApproved => {
                let reg = self.requests.entry(AssetId::new(entry.subject.clone())).or_default();
                reg.approvals.insert(entry.agent_id.clone(), entry.role);
            }
            ApprovalAction::RequestRejected => {
                let reg = self.requests.entry(AssetId::new(entry.subject.clone())).or_default();
                reg.rejected = true;
            }
            _ => {}
        }
        self.append_event(EventBody::ApprovalRecord(entry))
    }

    /// Creates a token class for an approved asset; the owner receives the
    /// whole supply.
    pub fn mint_tokens(&mut self, req: MintRequest) -> Result<TokenId, LedgerError> {
        if self.by_asset.contains_key(&req.asset_id) {
            return Err(LedgerError::DoubleTokenization(req.asset_id));
        }
        if self.tokens.contains_key(&req.token_id) {
            return Err(LedgerError::TokenIdTaken(req.token_id));
        }
        let approved = self
            .requests
            .get(&req.asset_id)
            .is_some_and(|r| r.satisfies(self.params.verification_quorum));
        if !approved {
            return Err(LedgerError::NotApproved(req.asset_id));
        }
        if req.total_supply == 0 {
            return Err(LedgerError::InvalidMint("total supply must be positive"));
        }
        if u64::from(req.restrictions.max_holding_bp) > crate::types::BP_DENOM {
            return Err(LedgerError::InvalidMint("max_holding_bp above 10000"));
        }

        let class = TokenClass {
            token_id: req.token_id.clone(),
            asset_id: req.asset_id.clone(),
            issuer: req.owner.clone(),
            total_supply: req.total_supply,
            holdings: BTreeMap::from([(req.owner.clone(), req.total_supply)]),
            whitelist: BTreeSet::from([req.owner.clone()]),
            blacklist: BTreeSet::new(),
            restrictions: req.restrictions,
            frozen: false,
            metadata_hash: req.metadata_hash.clone(),
            issue_price: req.issue_price,
        };
        self.tokens.insert(req.token_id.clone(), class);
        self.by_asset.insert(req.asset_id.clone(), req.token_id.clone());
        self.append_event(EventBody::Mint(MintRecord {
            token_id: req.token_id.clone(),
            asset_id: req.asset_id,
            owner: req.owner,
            total_supply: req.total_supply,
            max_holding_bp: req.restrictions.max_holding_bp,
            accredited_only: req.restrictions.accredited_only,
            whitelist_required: req.restrictions.whitelist_required,
            issue_price: req.issue_price,
            metadata_hash: req.metadata_hash,
        }));
        Ok(req.token_id)
    }

    fn check_transfer(&self, order: &TransferOrder) -> Result<(), RejectReason> {
        let Some(class) = self.tokens.get(&order.token_id) else {
            return Err(RejectReason::UnknownToken);
        };
        if class.frozen {
            return Err(RejectReason::Frozen);
        }
        if order.amount == 0 {
            return Err(RejectReason::ZeroAmount);
        }
        for party in [&order.from, &order.to] {
            if class.blacklist.contains(party) {
                return Err(RejectReason::NotWhitelisted);
            }
        }
        if !class.is_whitelisted(&order.from)
            || (class.restrictions.whitelist_required && !class.is_whitelisted(&order.to))
        {
            return Err(RejectReason::NotWhitelisted);
        }
        if class.balance(&order.from) < order.amount {
            return Err(RejectReason::InsufficientBalance);
        }
        if order.to != class.issuer && order.from != order.to {
            let after = class.balance(&order.to) + order.amount;
            if after > class.holding_cap() {
                return Err(RejectReason::ExceedsHoldingCap);
            }
        }
        Ok(())
    }

    /// Executes a transfer if every restriction passes. Rejections leave the
    /// token state unchanged and append a `TransferRejected` event.
    pub fn execute_transfer(&mut self, order: TransferOrder) -> TransferOutcome {
        let record = TransferRecord {
            token_id: order.token_id.clone(),
            from: order.from.clone(),
            to: order.to.clone(),
            amount: order.amount,
            price: order.price,
            via_agent: order.via_agent.clone(),
        };
        match self.check_transfer(&order) {
            Err(reason) => {
                self.append_event(EventBody::TransferRejected(RejectedTransfer {
                    transfer: record,
                    reason,
                }));
                TransferOutcome::Rejected(reason)
            }
            Ok(()) => {
                let class = self.tokens.get_mut(&order.token_id).expect("checked above");
                if order.from != order.to {
                    let from_left = class.balance(&order.from) - order.amount;
                    if from_left == 0 {
                        class.holdings.remove(&order.from);
                    } else {
                        class.holdings.insert(order.from.clone(), from_left);
                    }
                    *class.holdings.entry(order.to.clone()).or_insert(0) += order.amount;
                }
                let enroll = !class.restrictions.whitelist_required
                    && class.whitelist.insert(order.to.clone());
                self.append_event(EventBody::Transfer(record));
                if enroll {
                    self.append_event(EventBody::WhitelistChange(WhitelistRecord {
                        token_id: order.token_id,
                        address: order.to,
                        op: WhitelistOp::Add,
                        by_governance: false,
                    }));
                }
                TransferOutcome::Accepted
            }
        }
    }

    /// Sets the frozen flag. Returns `None` when the token is already in the
    /// requested state, so repeated freezes log nothing.
    pub fn set_frozen(
        &mut self,
        _cap: &GovernanceCap,
        token_id: &TokenId,
        frozen: bool,
        reason: &str,
    ) -> Result<Option<LedgerEvent>, LedgerError> {
        let class = self
            .tokens
            .get_mut(token_id)
            .ok_or_else(|| LedgerError::UnknownToken(token_id.clone()))?;
        if class.frozen == frozen {
            return Ok(None);
        }
        class.frozen = frozen;
        let rec = FreezeRecord { token_id: token_id.clone(), reason: reason.to_owned() };
        let body = if frozen { EventBody::Freeze(rec) } else { EventBody::Unfreeze(rec) };
        Ok(Some(self.append_event(body)))
    }

    pub fn update_whitelist<A: WhitelistAuthority>(
        &mut self,
        cap: &A,
        token_id: &TokenId,
        address: &Address,
        op: WhitelistOp,
    ) -> Result<LedgerEvent, LedgerError> {
        let governance = cap.is_governance();
        let class = self
            .tokens
            .get_mut(token_id)
            .ok_or_else(|| LedgerError::UnknownToken(token_id.clone()))?;
        match op {
            WhitelistOp::Add => {
                if class.blacklist.contains(address) {
                    if !governance {
                        return Err(LedgerError::Blacklisted(address.clone()));
                    }
                    class.blacklist.remove(address);
                }
                class.whitelist.insert(address.clone());
            }
            WhitelistOp::Remove => {
                let amount = class.balance(address);
                if amount > 0 {
                    return Err(LedgerError::HoldingsNonZero {
                        token: token_id.clone(),
                        address: address.clone(),
                        amount,
                    });
                }
                class.whitelist.remove(address);
            }
            WhitelistOp::Blacklist => {
                if !governance {
                    return Err(LedgerError::Unauthorized);
                }
                class.whitelist.remove(address);
                class.blacklist.insert(address.clone());
            }
        }
        Ok(self.append_event(EventBody::WhitelistChange(WhitelistRecord {
            token_id: token_id.clone(),
            address: address.clone(),
            op,
            by_governance: governance,
        })))
    }

    pub fn record_incident(&mut self, _cap: &GovernanceCap, entry: IncidentEntry) -> LedgerEvent {
        self.append_event(EventBody::IncidentRecord(entry))
    }

    pub fn record_slash(&mut self, _cap: &GovernanceCap, record: SlashRecord) -> LedgerEvent {
        self.append_event(EventBody::Slash(record))
    }

    /// Validates and stages a parameter change; it takes effect at the next
    /// [`Ledger::begin_tick`].
    pub fn stage_param_change(
        &mut self,
        _cap: &GovernanceCap,
        update: &ParamUpdate,
    ) -> Result<LedgerEvent, LedgerError> {
        let mut next = self.staged.as_ref().map_or(&self.params, |(_, p)| p).clone();
        let (old, new) = next.apply(update)?;
        self.staged = Some((self.tick, next));
        Ok(self.append_event(EventBody::ParamChange(ParamChangeRecord {
            field: update.field_name().to_owned(),
            old,
            new,
            effective_tick: self.tick + 1,
        })))
    }

    /// Recomputes the hash chain from genesis. Returns the first sequence
    /// number whose stored hash or position does not match.
    pub fn verify_chain(&self) -> Result<(), u64> {
        let mut prev = Digest::ZERO;
        for (i, ev) in self.events.iter().enumerate() {
            let expect =
                chain_hash(&prev, ev.seq, ev.tick, ev.kind().as_str(), &ev.body.payload_value());
            if ev.seq != i as u64 || expect != ev.hash {
                return Err(i as u64);
            }
            prev = ev.hash;
        }
        Ok(())
    }

    /// Writes the log as newline-delimited JSON.
    pub fn export_ndjson<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    #[cfg(test)]
    pub(crate) fn events_mut_for_test(&mut self) -> &mut Vec<LedgerEvent> {
        &mut self.events
    }
}

#[cfg(test)]
mod tests;
