//! Tokenization pipeline: onboarding, verification, valuation, compliance
//! and issuance.
//!
//! Each request advances by at most one stage per tick. A stage can finish
//! (move on), fail closed (any `Critical` finding rejects the request) or
//! put the request on hold until an outside event resolves it: a
//! re-appraisal, the owner's decision on a revised valuation, or enough
//! eligible agents.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AgentReport, Behavior, Classification, Evidence, Roster, Severity, Subject};
use crate::ledger::{
    ApprovalAction, ApprovalEntry, ComplianceCap, Ledger, LedgerError, MintRequest, Restrictions,
    WhitelistOp,
};
use crate::oracle::{AppraisalDoc, ComparableSale, Oracle};
use crate::staking::StakeRegistry;
use crate::types::{
    deviation_exceeds, div_round_half_even, Address, AgentId, AssetId, Cents, IdentityId, Role,
    Tick, TokenId, BP_DENOM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestState {
    Submitted,
    Verifying,
    Valuing,
    ComplianceCheck,
    Approved,
    Rejected,
    Minted,
}

impl RequestState {
    fn may_become(self, next: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (self, next),
            (Submitted, Verifying | Valuing)
                | (Verifying, Valuing | Rejected)
                | (Valuing, ComplianceCheck | Rejected)
                | (ComplianceCheck, Approved | Rejected)
                | (Approved, Minted | Rejected)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Rejected | RequestState::Minted)
    }
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Why a request is paused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hold {
    /// Waiting for a fresh appraisal document.
    Reappraisal,
    /// Waiting for the owner to accept or refuse the agent's estimate.
    OwnerDecision,
    /// No comparable sales to value against.
    InsufficientData,
    /// Fewer eligible agents than the stage needs.
    AwaitingAgents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwnerDecision {
    Accept,
    Refuse,
}

/// One step in a request's history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: Tick,
    pub state: RequestState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<Hold>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Asset details supplied by the owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submission {
    pub asset_id: AssetId,
    /// Symbol for the token class, e.g. `OFFICE_X`.
    pub token_id: TokenId,
    pub owner_identity: IdentityId,
    pub owner_address: Address,
    /// Defaults to the value on the appraisal document.
    #[serde(default)]
    pub declared_value: Option<Cents>,
    /// Size in the units the comparable sales are priced in.
    pub size: u64,
    pub supply: u64,
    pub fraction_bp: u32,
    #[serde(default)]
    pub document_hash: String,
    #[serde(default = "default_jurisdiction")]
    pub jurisdiction: String,
    /// Tighter holding cap than the jurisdiction's profile, if wanted.
    #[serde(default)]
    pub max_holding_bp: Option<u32>,
}

fn default_jurisdiction() -> String {
    "private_placement".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("owner identity {0} is unknown to the identity service")]
    UnknownOwner(IdentityId),
    #[error("a request for {0} already exists")]
    DuplicateRequest(AssetId),
    #[error("requested supply must be positive")]
    ZeroSupply,
    #[error("asset size must be positive")]
    ZeroSize,
    #[error("fraction {0}bp is outside (0, 10000]")]
    Fraction(u32),
    #[error("holding cap {0}bp exceeds 10000")]
    HoldingCap(u32),
    #[error("no declared value and no appraisal on file for {0}")]
    NoDeclaredValue(AssetId),
    #[error("unknown jurisdiction {0}")]
    UnknownJurisdiction(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("no tokenization request for {0}")]
    UnknownRequest(AssetId),
    #[error("request for {asset} is {state}, expected {expected}")]
    WrongState { asset: AssetId, state: RequestState, expected: RequestState },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationRequest {
    pub submission: Submission,
    pub declared_value: Cents,
    pub state: RequestState,
    pub hold: Option<Hold>,
    /// Median-of-comparables estimate, once valued.
    pub estimate: Option<Cents>,
    /// Value used for pricing: the declared value, or the estimate if the
    /// owner accepted it.
    pub effective_value: Option<Cents>,
    pub restrictions: Option<Restrictions>,
    pub approvals: BTreeMap<AgentId, Role>,
    /// Appraisal supplied after submission, replacing the one on file.
    pub appraisal: Option<AppraisalDoc>,
    pub owner_decision: Option<OwnerDecision>,
    pub issue_price: Option<Cents>,
    pub trace: Vec<TraceEntry>,
    last_step: Option<Tick>,
}

impl TokenizationRequest {
    fn push_trace(&mut self, tick: Tick, note: impl Into<String>) {
        self.trace.push(TraceEntry { tick, state: self.state, hold: self.hold, note: note.into() });
    }

    fn transition(&mut self, tick: Tick, next: RequestState, note: impl Into<String>) {
        assert!(self.state.may_become(next), "illegal transition {} -> {next}", self.state);
        self.state = next;
        self.hold = None;
        self.push_trace(tick, note);
    }

    fn pause(&mut self, tick: Tick, hold: Hold, note: impl Into<String>) {
        if self.hold != Some(hold) {
            self.hold = Some(hold);
            self.push_trace(tick, note);
        }
    }

    fn subject(&self) -> Subject {
        Subject::Asset(self.submission.asset_id.clone())
    }
}

/// Estimated value: median over comparables of `unit_price × size`, with an
/// even count averaged and rounded half to even. `None` when empty.
pub fn estimate_value(comparables: &[ComparableSale], size: u64) -> Option<Cents> {
    let mut values: Vec<u128> =
        comparables.iter().map(|c| u128::from(c.unit_price) * u128::from(size)).collect();
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        div_round_half_even(values[n / 2 - 1] + values[n / 2], 2)
    };
    Some(u64::try_from(median).expect("estimate fits in u64 cents"))
}

/// Deviation of `declared` from `estimate` in basis points, rounded down.
pub fn deviation_bp(declared: Cents, estimate: Cents) -> u64 {
    if estimate == 0 {
        return u64::MAX;
    }
    let d = u128::from(declared.abs_diff(estimate)) * u128::from(BP_DENOM) / u128::from(estimate);
    u64::try_from(d).unwrap_or(u64::MAX)
}

/// Initial token price: `effective × fraction_bp / 10000 / supply`, rounded
/// half to even.
pub fn token_price(effective: Cents, fraction_bp: u32, supply: u64) -> Cents {
    let num = u128::from(effective) * u128::from(fraction_bp);
    let den = u128::from(BP_DENOM) * u128::from(supply);
    u64::try_from(div_round_half_even(num, den)).expect("price fits in u64 cents")
}

/// Outcome of one verifier's checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Pass,
    Fail(Severity, Classification),
}

/// The verification checks, in their fixed order. The first failure wins.
pub fn verification_checks(
    oracle: &Oracle,
    ledger: &Ledger,
    req: &TokenizationRequest,
    tick: Tick,
) -> (VerifyOutcome, Evidence) {
    let asset = &req.submission.asset_id;
    let rec = oracle.query_registry(asset, tick);
    let ev = Evidence::default();
    if !rec.exists || rec.legal_owner != req.submission.owner_identity {
        let ev = ev.note("registered_owner", &rec.legal_owner).note("exists", rec.exists);
        return (VerifyOutcome::Fail(Severity::Critical, Classification::TitleMismatch), ev);
    }
    if rec.liens > 0 {
        return (
            VerifyOutcome::Fail(Severity::Critical, Classification::LienFound),
            ev.note("liens", rec.liens),
        );
    }
    if let Some(token) = ledger.token_for_asset(asset) {
        return (
            VerifyOutcome::Fail(Severity::Critical, Classification::DoubleTokenization),
            ev.note("existing_token", token),
        );
    }
    let doc = req.appraisal.clone().or_else(|| oracle.appraisal(asset, tick));
    let Some(doc) = doc.filter(|d| d.appraiser_signature_valid) else {
        return (VerifyOutcome::Fail(Severity::Critical, Classification::ForgedDocument), ev);
    };
    let max_age = ledger.params().appraisal_max_age_months;
    if doc.issued_months_ago > max_age {
        let ev = ev.note("months", doc.issued_months_ago).note("max_months", max_age);
        return (VerifyOutcome::Fail(Severity::Flag, Classification::StaleAppraisal), ev);
    }
    (VerifyOutcome::Pass, ev)
}

/// Restriction profiles selected by jurisdiction.
pub fn default_jurisdictions() -> BTreeMap<String, Restrictions> {
    BTreeMap::from([
        (
            "private_placement".to_owned(),
            Restrictions { whitelist_required: true, accredited_only: true, max_holding_bp: 2000 },
        ),
        (
            "public".to_owned(),
            Restrictions { whitelist_required: false, accredited_only: false, max_holding_bp: 10000 },
        ),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WhitelistRejection {
    UnknownToken,
    KycFail,
    NotAccredited,
    AmlHit,
    Blacklisted,
}

/// Shared state the pipeline acts on during a step.
pub struct PipelineCtx<'a> {
    pub tick: Tick,
    pub oracle: &'a Oracle,
    pub ledger: &'a mut Ledger,
    pub staking: &'a mut StakeRegistry,
    pub roster: &'a Roster,
}

/// All tokenization requests plus the compliance agent's address book.
#[derive(Debug)]
pub struct Pipeline {
    compliance: ComplianceCap,
    jurisdictions: BTreeMap<String, Restrictions>,
    requests: BTreeMap<AssetId, TokenizationRequest>,
    address_book: BTreeMap<Address, IdentityId>,
}

fn owner_agent(identity: &IdentityId) -> AgentId {
    AgentId::new(format!("owner:{identity}"))
}

impl Pipeline {
    pub fn new(compliance: ComplianceCap, jurisdictions: BTreeMap<String, Restrictions>) -> Self {
        Pipeline { compliance, jurisdictions, requests: BTreeMap::new(), address_book: BTreeMap::new() }
    }

    pub fn request(&self, asset: &AssetId) -> Option<&TokenizationRequest> {
        self.requests.get(asset)
    }

    pub fn requests(&self) -> impl Iterator<Item = &TokenizationRequest> {
        self.requests.values()
    }

    /// Identity behind an investor address, if compliance has seen it.
    pub fn identity_of(&self, address: &Address) -> Option<&IdentityId> {
        self.address_book.get(address)
    }

    /// Every address registered to `identity`.
    pub fn addresses_of(&self, identity: &IdentityId) -> Vec<Address> {
        self.address_book.iter().filter(|(_, id)| *id == identity).map(|(a, _)| a.clone()).collect()
    }

    /// Opens a request and notifies the verification and valuation agents.
    pub fn submit_request(
        &mut self,
        oracle: &Oracle,
        tick: Tick,
        sub: Submission,
    ) -> Result<Vec<AgentReport>, SubmitError> {
        if !oracle.knows_identity(&sub.owner_identity) {
            return Err(SubmitError::UnknownOwner(sub.owner_identity));
        }
        if self.requests.contains_key(&sub.asset_id) {
            return Err(SubmitError::DuplicateRequest(sub.asset_id));
        }
        if sub.supply == 0 {
            return Err(SubmitError::ZeroSupply);
        }
        if sub.size == 0 {
            return Err(SubmitError::ZeroSize);
        }
        if sub.fraction_bp == 0 || u64::from(sub.fraction_bp) > BP_DENOM {
            return Err(SubmitError::Fraction(sub.fraction_bp));
        }
        if let Some(cap) = sub.max_holding_bp.filter(|&c| u64::from(c) > BP_DENOM) {
            return Err(SubmitError::HoldingCap(cap));
        }
        if !self.jurisdictions.contains_key(&sub.jurisdiction) {
            return Err(SubmitError::UnknownJurisdiction(sub.jurisdiction));
        }
        let declared = match sub.declared_value {
            Some(v) => v,
            None => oracle
                .appraisal(&sub.asset_id, tick)
                .map(|d| d.declared_value)
                .ok_or_else(|| SubmitError::NoDeclaredValue(sub.asset_id.clone()))?,
        };
        self.address_book.insert(sub.owner_address.clone(), sub.owner_identity.clone());
        let owner = owner_agent(&sub.owner_identity);
        let subject = Subject::Asset(sub.asset_id.clone());
        let mut req = TokenizationRequest {
            submission: sub,
            declared_value: declared,
            state: RequestState::Submitted,
            hold: None,
            estimate: None,
            effective_value: None,
            restrictions: None,
            approvals: BTreeMap::new(),
            appraisal: None,
            owner_decision: None,
            issue_price: None,
            trace: Vec::new(),
            last_step: None,
        };
        req.push_trace(tick, format!("declared value {declared}"));
        self.requests.insert(req.submission.asset_id.clone(), req);
        let notify = |role: Role| {
            AgentReport::info(&owner, subject.clone(), tick)
                .with_evidence(Evidence::default().note("notify", role))
        };
        Ok(vec![notify(Role::Verification), notify(Role::Valuation)])
    }

    /// A fresh appraisal from the owner. Clears a re-appraisal hold.
    pub fn reappraisal(&mut self, tick: Tick, doc: AppraisalDoc) -> Result<(), PipelineError> {
        let req = self
            .requests
            .get_mut(&doc.asset_id)
            .ok_or_else(|| PipelineError::UnknownRequest(doc.asset_id.clone()))?;
        req.appraisal = Some(doc);
        if req.hold == Some(Hold::Reappraisal) {
            req.hold = None;
            req.push_trace(tick, "re-appraisal received");
        }
        Ok(())
    }

    /// Records the owner's answer to a revised valuation. It may arrive
    /// before the valuation agent asks.
    pub fn owner_decision(
        &mut self,
        tick: Tick,
        asset: &AssetId,
        decision: OwnerDecision,
    ) -> Result<(), PipelineError> {
        let req = self.requests.get_mut(asset).ok_or_else(|| PipelineError::UnknownRequest(asset.clone()))?;
        req.owner_decision = Some(decision);
        if req.hold == Some(Hold::OwnerDecision) {
            req.hold = None;
            req.push_trace(tick, format!("owner decision: {decision:?}"));
        }
        Ok(())
    }

    /// Advances every open request by at most one stage.
    pub fn step(&mut self, ctx: &mut PipelineCtx<'_>) -> Vec<AgentReport> {
        let Pipeline { requests, jurisdictions, .. } = self;
        let mut reports = Vec::new();
        for req in requests.values_mut() {
            if req.state.is_terminal() || req.last_step == Some(ctx.tick) {
                continue;
            }
            if matches!(req.hold, Some(h) if h != Hold::AwaitingAgents) {
                continue;
            }
            req.last_step = Some(ctx.tick);
            match req.state {
                RequestState::Submitted => req.transition(ctx.tick, RequestState::Verifying, ""),
                RequestState::Verifying => reports.extend(verify_asset(req, ctx)),
                RequestState::Valuing => reports.extend(appraise_asset(req, ctx)),
                RequestState::ComplianceCheck => reports.extend(compliance_check(req, ctx, jurisdictions)),
                RequestState::Approved => {
                    if let Err(e) = issue_tokens(req, ctx) {
                        req.transition(ctx.tick, RequestState::Rejected, format!("mint failed: {e}"));
                    }
                }
                RequestState::Rejected | RequestState::Minted => unreachable!("terminal"),
            }
        }
        reports
    }

    /// Adds an investor address to a token's whitelist after KYC, AML and
    /// accreditation checks.
    pub fn whitelist_investor(
        &mut self,
        oracle: &Oracle,
        ledger: &mut Ledger,
        tick: Tick,
        token: &TokenId,
        identity: &IdentityId,
        address: &Address,
    ) -> Result<(), WhitelistRejection> {
        let Some(class) = ledger.token(token) else {
            return Err(WhitelistRejection::UnknownToken);
        };
        let accredited_only = class.restrictions.accredited_only;
        let profile = oracle.check_identity(identity, tick);
        if !profile.kyc_passed {
            return Err(WhitelistRejection::KycFail);
        }
        if accredited_only && !profile.accredited {
            return Err(WhitelistRejection::NotAccredited);
        }
        if profile.aml_flagged {
            return Err(WhitelistRejection::AmlHit);
        }
        match ledger.update_whitelist(&self.compliance, token, address, WhitelistOp::Add) {
            Ok(_) => {
                self.address_book.insert(address.clone(), identity.clone());
                Ok(())
            }
            Err(LedgerError::Blacklisted(_)) => Err(WhitelistRejection::Blacklisted),
            Err(LedgerError::UnknownToken(_)) => Err(WhitelistRejection::UnknownToken),
            Err(e) => unreachable!("whitelist add cannot fail with {e}"),
        }
    }
}

fn approve(req: &mut TokenizationRequest, ledger: &mut Ledger, agent: &AgentId, role: Role, note: String) {
    if req.approvals.contains_key(agent) {
        return;
    }
    req.approvals.insert(agent.clone(), role);
    ledger.record_approval(ApprovalEntry {
        action: ApprovalAction::RequestApproved,
        subject: req.submission.asset_id.to_string(),
        agent_id: agent.clone(),
        role,
        amount: None,
        note,
    });
}

fn reject(req: &mut TokenizationRequest, ctx: &mut PipelineCtx<'_>, agent: &AgentId, role: Role, note: String) {
    ctx.ledger.record_approval(ApprovalEntry {
        action: ApprovalAction::RequestRejected,
        subject: req.submission.asset_id.to_string(),
        agent_id: agent.clone(),
        role,
        amount: None,
        note: note.clone(),
    });
    req.transition(ctx.tick, RequestState::Rejected, note);
}

/// Runs the first `quorum` eligible verifiers. Every passing verifier's
/// approval is recorded; any critical finding rejects the request and any
/// other finding pauses it.
pub fn verify_asset(req: &mut TokenizationRequest, ctx: &mut PipelineCtx<'_>) -> Vec<AgentReport> {
    let quorum = ctx.ledger.params().verification_quorum as usize;
    let verifiers: Vec<_> = ctx.roster.eligible(Role::Verification, ctx.staking).take(quorum).cloned().collect();
    if verifiers.len() < quorum {
        req.pause(ctx.tick, Hold::AwaitingAgents, format!("{} of {quorum} verifiers available", verifiers.len()));
        return Vec::new();
    }
    let mut reports = Vec::new();
    let mut worst: Option<(Severity, Classification, AgentId)> = None;
    for v in &verifiers {
        let (outcome, evidence) = match v.behavior {
            Behavior::Colluding => (VerifyOutcome::Pass, Evidence::default()),
            Behavior::Honest => verification_checks(ctx.oracle, ctx.ledger, req, ctx.tick),
        };
        match outcome {
            VerifyOutcome::Pass => {
                approve(req, ctx.ledger, &v.id, Role::Verification, String::new());
                reports.push(AgentReport::info(&v.id, req.subject(), ctx.tick));
            }
            VerifyOutcome::Fail(sev, class) => {
                if worst.as_ref().is_none_or(|(s, _, _)| sev > *s) {
                    worst = Some((sev, class, v.id.clone()));
                }
                reports.push(AgentReport::finding(&v.id, req.subject(), sev, class, ctx.tick).with_evidence(evidence));
            }
        }
    }
    match worst {
        None => req.transition(ctx.tick, RequestState::Valuing, ""),
        Some((Severity::Critical, class, agent)) => {
            reject(req, ctx, &agent, Role::Verification, class.to_string());
        }
        Some((_, class, _)) => {
            let hold = if class == Classification::StaleAppraisal { Hold::Reappraisal } else { Hold::AwaitingAgents };
            req.pause(ctx.tick, hold, class.to_string());
        }
    }
    reports
}

/// Values the asset against comparable sales and applies the deviation
/// thresholds.
pub fn appraise_asset(req: &mut TokenizationRequest, ctx: &mut PipelineCtx<'_>) -> Vec<AgentReport> {
    let Some(agent) = ctx.roster.eligible(Role::Valuation, ctx.staking).next().cloned() else {
        req.pause(ctx.tick, Hold::AwaitingAgents, "no valuation agent available");
        return Vec::new();
    };
    let subject = req.subject();
    let tick = ctx.tick;
    if agent.behavior == Behavior::Colluding {
        req.effective_value = Some(req.declared_value);
        approve(req, ctx.ledger, &agent.id, Role::Valuation, String::new());
        req.transition(tick, RequestState::ComplianceCheck, "");
        return vec![AgentReport::info(&agent.id, subject, tick)];
    }
    let comparables = ctx.oracle.fetch_comparables(&req.submission.asset_id);
    let Some(estimate) = estimate_value(&comparables, req.submission.size) else {
        req.pause(tick, Hold::InsufficientData, "no comparable sales");
        return vec![AgentReport::finding(&agent.id, subject, Severity::Flag, Classification::InsufficientData, tick)];
    };
    req.estimate = Some(estimate);
    let declared = req.declared_value;
    let params = ctx.ledger.params();
    let evidence = Evidence::default()
        .note("declared", declared)
        .note("estimate", estimate)
        .note("deviation_bp", deviation_bp(declared, estimate));
    if deviation_exceeds(declared, estimate, params.valuation_flag_bp) {
        let report = AgentReport::finding(&agent.id, subject, Severity::Critical, Classification::ValueDiscrepancy, tick)
            .with_evidence(evidence);
        reject(req, ctx, &agent.id, Role::Valuation, "ValueDiscrepancy".into());
        return vec![report];
    }
    if deviation_exceeds(declared, estimate, params.valuation_adjust_bp) {
        let report = AgentReport::finding(&agent.id, subject, Severity::Flag, Classification::ValueDiscrepancy, tick)
            .with_evidence(evidence);
        match req.owner_decision {
            None => req.pause(tick, Hold::OwnerDecision, format!("estimate {estimate}")),
            Some(OwnerDecision::Accept) => {
                req.effective_value = Some(estimate);
                approve(req, ctx.ledger, &agent.id, Role::Valuation, format!("owner accepted {estimate}"));
                req.transition(tick, RequestState::ComplianceCheck, format!("owner accepted estimate {estimate}"));
            }
            Some(OwnerDecision::Refuse) => {
                reject(req, ctx, &agent.id, Role::Valuation, "owner refused revised valuation".into());
            }
        }
        return vec![report];
    }
    req.effective_value = Some(declared);
    approve(req, ctx.ledger, &agent.id, Role::Valuation, String::new());
    req.transition(tick, RequestState::ComplianceCheck, "");
    vec![AgentReport::info(&agent.id, subject, tick)]
}

/// Checks the owner's KYC and AML status and attaches the jurisdiction's
/// restriction profile.
pub fn compliance_check(
    req: &mut TokenizationRequest,
    ctx: &mut PipelineCtx<'_>,
    jurisdictions: &BTreeMap<String, Restrictions>,
) -> Vec<AgentReport> {
    let Some(agent) = ctx.roster.eligible(Role::Compliance, ctx.staking).next().cloned() else {
        req.pause(ctx.tick, Hold::AwaitingAgents, "no compliance agent available");
        return Vec::new();
    };
    let subject = req.subject();
    let tick = ctx.tick;
    if agent.behavior == Behavior::Honest {
        let owner = &req.submission.owner_identity;
        let profile = ctx.oracle.check_identity(owner, tick);
        let failure = if !profile.kyc_passed {
            Some(Classification::KycFail)
        } else if profile.aml_flagged {
            Some(Classification::AmlHit)
        } else {
            None
        };
        if let Some(class) = failure {
            let report = AgentReport::finding(&agent.id, subject, Severity::Critical, class, tick)
                .with_evidence(Evidence::default().note("identity", owner));
            reject(req, ctx, &agent.id, Role::Compliance, class.to_string());
            return vec![report];
        }
    }
    let Some(mut profile) = jurisdictions.get(&req.submission.jurisdiction).copied() else {
        reject(req, ctx, &agent.id, Role::Compliance, format!("unknown jurisdiction {}", req.submission.jurisdiction));
        return Vec::new();
    };
    if let Some(cap) = req.submission.max_holding_bp {
        profile.max_holding_bp = profile.max_holding_bp.min(cap);
    }
    req.restrictions = Some(profile);
    approve(req, ctx.ledger, &agent.id, Role::Compliance, format!("max_holding_bp {}", profile.max_holding_bp));
    let quorum = ctx.ledger.params().verification_quorum;
    let ready = ctx.ledger.request_approvals(&req.submission.asset_id).is_some_and(|r| r.satisfies(quorum));
    if ready {
        req.transition(tick, RequestState::Approved, "");
    } else {
        req.pause(tick, Hold::AwaitingAgents, "approvals short of quorum");
    }
    vec![AgentReport::info(&agent.id, subject, tick)]
}

/// Mints the token class for an approved request and pays each certified
/// approver its participation fee.
pub fn issue_tokens(req: &mut TokenizationRequest, ctx: &mut PipelineCtx<'_>) -> Result<(), PipelineError> {
    if req.state != RequestState::Approved {
        return Err(PipelineError::WrongState {
            asset: req.submission.asset_id.clone(),
            state: req.state,
            expected: RequestState::Approved,
        });
    }
    let sub = &req.submission;
    let effective = req.effective_value.unwrap_or(req.declared_value);
    let price = token_price(effective, sub.fraction_bp, sub.supply);
    let restrictions = req.restrictions.expect("set by compliance");
    ctx.ledger.mint_tokens(MintRequest {
        asset_id: sub.asset_id.clone(),
        token_id: sub.token_id.clone(),
        total_supply: sub.supply,
        owner: sub.owner_address.clone(),
        restrictions,
        metadata_hash: sub.document_hash.clone(),
        issue_price: price,
    })?;
    req.issue_price = Some(price);
    req.transition(ctx.tick, RequestState::Minted, format!("price {price}"));
    let fee = ctx.ledger.params().participation_fee;
    for agent in req.approvals.keys() {
        if ctx.staking.is_certified(agent) {
            ctx.staking.reward_agent(ctx.ledger, agent, fee).expect("certified agent");
        }
    }
    Ok(())
}
