//! The governance agent.
//!
//! Once per tick [`Governance::governance_tick`] takes every report the
//! functional agents produced and
//!
//! 1. investigates each `Flag` or `Critical` report by deterministic
//!    corroboration: an independent second oracle source, a matching report
//!    from a different agent within `corroboration_ticks`, or a fact that can
//!    be recomputed from ledger and oracle state;
//! 2. for a verified `Critical` report, freezes the affected token,
//!    blacklists implicated addresses, records the incident and slashes the
//!    agents whose approvals covered the bad fact;
//! 3. updates trust scores and sends agents below the threshold to
//!    reassessment;
//! 4. stages any parameter changes scheduled for this tick.
//!
//! Unverified reports are kept and re-examined for `corroboration_ticks`,
//! then dropped. Nobody is ever punished on an unverified report.

pub mod trust;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::monitor::{self, DetectorParams, TradeRecord};
use crate::agents::pipeline::{estimate_value, Pipeline};
use crate::agents::{AgentReport, AgentSpec, Classification, Roster, Severity, Subject};
use crate::ledger::{
    ApprovalAction, ApprovalEntry, EventBody, GovernanceCap, IncidentEntry, Ledger, ParamUpdate,
    WhitelistOp,
};
use crate::oracle::Oracle;
use crate::staking::{AgentStatus, StakeRegistry, StakingError};
use crate::types::{deviation_exceeds, Address, AgentId, AssetId, Fraction, Role, Tick, TokenId};
use trust::{Penalty, TrustBook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IncidentClass {
    FraudulentAsset,
    MarketManipulation,
    ComplianceBreach,
}

impl IncidentClass {
    pub fn of(c: Classification) -> IncidentClass {
        use Classification::*;
        match c {
            TitleMismatch | LienFound | DoubleTokenization | StaleAppraisal | ValueDiscrepancy
            | InsufficientData | ForgedDocument => IncidentClass::FraudulentAsset,
            KycFail | NotAccredited | AmlHit | FlaggedCounterparty => IncidentClass::ComplianceBreach,
            VolumeSpike | WashTrading | RapidResale => IncidentClass::MarketManipulation,
        }
    }
}

impl fmt::Display for IncidentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misconduct {
    Negligence,
    Malice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum GovernanceAction {
    FreezeToken { token_id: TokenId, reason: String },
    BlacklistAddress { token_id: TokenId, address: Address },
    RecordIncident { incident_id: u64 },
    SlashStake { agent_id: AgentId, amount_bp: u32, reason: String },
    RequireReassessment { agent_id: AgentId, score: Fraction },
    ParamChange { update: ParamUpdate },
}

impl fmt::Display for GovernanceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GovernanceAction::FreezeToken { token_id, .. } => write!(f, "FreezeToken({token_id})"),
            GovernanceAction::BlacklistAddress { address, .. } => write!(f, "BlacklistAddress({address})"),
            GovernanceAction::RecordIncident { incident_id } => write!(f, "RecordIncident({incident_id})"),
            GovernanceAction::SlashStake { agent_id, amount_bp, .. } => {
                write!(f, "SlashStake({agent_id},{amount_bp}bp)")
            }
            GovernanceAction::RequireReassessment { agent_id, .. } => {
                write!(f, "RequireReassessment({agent_id})")
            }
            GovernanceAction::ParamChange { update } => write!(f, "ParamChange({})", update.field_name()),
        }
    }
}

/// A confirmed finding and what governance did about it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incident {
    pub incident_id: u64,
    pub tick: Tick,
    pub classification: IncidentClass,
    pub finding: Classification,
    pub subject: Subject,
    pub source_reports: Vec<String>,
    pub verified: bool,
    pub responsible_agents: Vec<AgentId>,
    pub misconduct: Option<Misconduct>,
    pub actions_taken: Vec<GovernanceAction>,
}

/// How a report was corroborated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    SecondSource,
    PeerReport,
    LedgerState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ReviewOutcome {
    Verified { basis: Basis },
    Retained,
    Dropped,
    /// Verified, but the same finding on the same subject was already acted on.
    Duplicate,
}

/// Governance's record of looking at one report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Review {
    pub tick: Tick,
    pub report: String,
    pub severity: Severity,
    pub subject: Subject,
    #[serde(flatten)]
    pub outcome: ReviewOutcome,
}

/// What a scenario says should happen to an agent sent to reassessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReassessmentPlan {
    Recertify,
    Replace {
        #[serde(default)]
        replacement: Option<AgentSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReassessmentOutcome {
    Recertified,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReassessError {
    #[error("no reassessment plan for agent {0}")]
    NoPlan(AgentId),
    #[error("replacement chosen for {0} but no substitute is configured")]
    NoReplacementConfigured(AgentId),
    #[error(transparent)]
    Staking(#[from] StakingError),
}

/// Everything governance reads or acts on during a tick.
pub struct GovCtx<'a> {
    pub tick: Tick,
    pub oracle: &'a Oracle,
    pub ledger: &'a mut Ledger,
    pub staking: &'a mut StakeRegistry,
    pub roster: &'a mut Roster,
    pub pipeline: &'a Pipeline,
}

/// A confirmed finding whose emergency actions are planned but not yet
/// executed.
#[derive(Debug, Clone)]
struct Intervention {
    report: AgentReport,
    sources: Vec<String>,
    token: Option<TokenId>,
    blacklist: Vec<Address>,
    responsible: Vec<AgentId>,
    misconduct: Option<Misconduct>,
}

#[derive(Debug)]
pub struct Governance {
    cap: GovernanceCap,
    auto_approve: bool,
    trust: TrustBook,
    incidents: Vec<Incident>,
    reviews: Vec<Review>,
    /// Recent findings from any agent, used for peer corroboration.
    seen: Vec<AgentReport>,
    pending: Vec<AgentReport>,
    queued: Vec<Intervention>,
    penalties: Vec<Penalty>,
    plans: BTreeMap<AgentId, ReassessmentPlan>,
    reassessments: Vec<(Tick, AgentId, Result<ReassessmentOutcome, ReassessError>)>,
    scheduled: Vec<(Tick, ParamUpdate)>,
    param_errors: Vec<(Tick, String)>,
    handled: BTreeSet<(Classification, Subject)>,
}

/// Trades on `token` as recorded by accepted transfer events.
pub fn trades_from_ledger(ledger: &Ledger, token: &TokenId) -> Vec<TradeRecord> {
    ledger
        .events()
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Transfer(t) if &t.token_id == token => Some(TradeRecord {
                token_id: t.token_id.clone(),
                from: t.from.clone(),
                to: t.to.clone(),
                amount: t.amount,
                price: t.price,
                tick: e.tick,
                via_agent: t.via_agent.clone(),
            }),
            _ => None,
        })
        .collect()
}

impl Governance {
    pub fn new(cap: GovernanceCap, auto_approve: bool, plans: BTreeMap<AgentId, ReassessmentPlan>) -> Self {
        Governance {
            cap,
            auto_approve,
            trust: TrustBook::default(),
            incidents: Vec::new(),
            reviews: Vec::new(),
            seen: Vec::new(),
            pending: Vec::new(),
            queued: Vec::new(),
            penalties: Vec::new(),
            plans,
            reassessments: Vec::new(),
            scheduled: Vec::new(),
            param_errors: Vec::new(),
            handled: BTreeSet::new(),
        }
    }

    pub fn cap(&self) -> &GovernanceCap {
        &self.cap
    }

    pub fn trust(&self) -> &TrustBook {
        &self.trust
    }

    pub fn incidents(&self) -> &[Incident] {
        &self.incidents
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn reassessments(&self) -> &[(Tick, AgentId, Result<ReassessmentOutcome, ReassessError>)] {
        &self.reassessments
    }

    pub fn param_errors(&self) -> &[(Tick, String)] {
        &self.param_errors
    }

    pub fn queued_interventions(&self) -> usize {
        self.queued.len()
    }

    /// Starts tracking a newly certified agent's trust score.
    pub fn register_agent(&mut self, id: &AgentId, tick: Tick, initial: Fraction) {
        self.trust.reset(id, tick, initial, "certified");
    }

    /// Queues a parameter change to be staged at the end of `tick`.
    pub fn schedule_param_change(&mut self, tick: Tick, update: ParamUpdate) {
        self.scheduled.push((tick, update));
    }

    /// Lifts a freeze after investigation.
    pub fn unfreeze(&mut self, ledger: &mut Ledger, token: &TokenId, reason: &str) -> Result<(), crate::ledger::LedgerError> {
        ledger.set_frozen(&self.cap, token, false, reason).map(|_| ())
    }

    /// One pass of the governance loop.
    pub fn governance_tick(&mut self, reports: &[AgentReport], ctx: &mut GovCtx<'_>) -> Vec<GovernanceAction> {
        let tick = ctx.tick;
        let window = ctx.ledger.params().corroboration_ticks;
        let findings: Vec<AgentReport> = reports.iter().filter(|r| r.severity >= Severity::Flag).cloned().collect();
        self.seen.extend(findings.iter().cloned());
        self.seen.retain(|r| r.tick + window >= tick);

        let mut actions = Vec::new();
        let mut queue = std::mem::take(&mut self.pending);
        queue.extend(findings);
        for report in queue {
            match self.investigate(&report, ctx) {
                Some(basis) => {
                    let key = (report.classification.expect("finding"), report.subject.clone());
                    let outcome = if self.handled.contains(&key) {
                        ReviewOutcome::Duplicate
                    } else {
                        ReviewOutcome::Verified { basis }
                    };
                    self.review(tick, &report, outcome.clone());
                    if report.severity == Severity::Critical && matches!(outcome, ReviewOutcome::Verified { .. }) {
                        self.handled.insert(key);
                        let plan = self.plan(&report, ctx);
                        if self.auto_approve {
                            actions.extend(self.execute(plan, ctx));
                        } else {
                            self.queued.push(plan);
                        }
                    }
                }
                None if tick >= report.tick + window => self.review(tick, &report, ReviewOutcome::Dropped),
                None => {
                    if report.tick == tick {
                        self.review(tick, &report, ReviewOutcome::Retained);
                    }
                    self.pending.push(report);
                }
            }
        }

        actions.extend(self.update_trust(ctx));
        actions.extend(self.apply_scheduled_params(ctx));
        actions
    }

    /// Executes interventions held for sign-off.
    pub fn signoff(&mut self, ctx: &mut GovCtx<'_>) -> Vec<GovernanceAction> {
        let queued = std::mem::take(&mut self.queued);
        let mut actions = Vec::new();
        for plan in queued {
            actions.extend(self.execute(plan, ctx));
        }
        ctx.ledger.record_approval(ApprovalEntry {
            action: ApprovalAction::GovernanceSignoff,
            subject: "governance".into(),
            agent_id: "governance".into(),
            role: Role::Governance,
            amount: Some(actions.len() as u64),
            note: String::new(),
        });
        actions
    }

    fn review(&mut self, tick: Tick, report: &AgentReport, outcome: ReviewOutcome) {
        self.reviews.push(Review {
            tick,
            report: report.reference(),
            severity: report.severity,
            subject: report.subject.clone(),
            outcome,
        });
    }

    /// Deterministic corroboration of a finding. `None` means unverified.
    pub fn investigate(&self, report: &AgentReport, ctx: &GovCtx<'_>) -> Option<Basis> {
        let class = report.classification?;
        if self.peer_agrees(report, ctx.ledger.params().corroboration_ticks) {
            return Some(Basis::PeerReport);
        }
        match (&report.subject, class) {
            (Subject::Asset(asset), _) => self.check_asset_fact(asset, report, class, ctx),
            (Subject::Token(token), _) => check_market_fact(token, report, class, ctx),
            (Subject::Address(addr), Classification::FlaggedCounterparty) => {
                address_flagged_independently(addr, None, ctx)
            }
            (Subject::Address(_), _) => None,
        }
    }

    fn peer_agrees(&self, report: &AgentReport, window: Tick) -> bool {
        self.seen.iter().any(|other| {
            other.agent_id != report.agent_id
                && other.subject == report.subject
                && other.classification == report.classification
                && other.tick.abs_diff(report.tick) <= window
        })
    }

    fn check_asset_fact(
        &self,
        asset: &AssetId,
        report: &AgentReport,
        class: Classification,
        ctx: &GovCtx<'_>,
    ) -> Option<Basis> {
        let req = ctx.pipeline.request(asset)?;
        let at = report.tick;
        let owner = &req.submission.owner_identity;
        let yes = |b: bool, basis: Basis| b.then_some(basis);
        match class {
            Classification::TitleMismatch => {
                let second = ctx.oracle.query_registry_secondary(asset, at)?;
                yes(!second.exists || &second.legal_owner != owner, Basis::SecondSource)
            }
            Classification::LienFound => {
                let second = ctx.oracle.query_registry_secondary(asset, at)?;
                yes(second.liens > 0, Basis::SecondSource)
            }
            Classification::DoubleTokenization => {
                let minted_elsewhere = ctx.ledger.token_for_asset(asset).is_some()
                    && req.state != crate::agents::pipeline::RequestState::Minted;
                yes(minted_elsewhere, Basis::LedgerState)
            }
            Classification::ForgedDocument | Classification::StaleAppraisal => {
                let doc = req.appraisal.clone().or_else(|| ctx.oracle.appraisal(asset, at));
                let bad = match (class, doc) {
                    (Classification::ForgedDocument, None) => true,
                    (Classification::ForgedDocument, Some(d)) => !d.appraiser_signature_valid,
                    (_, Some(d)) => d.issued_months_ago > ctx.ledger.params().appraisal_max_age_months,
                    (_, None) => false,
                };
                yes(bad, Basis::LedgerState)
            }
            Classification::ValueDiscrepancy | Classification::InsufficientData => {
                let estimate = estimate_value(&ctx.oracle.fetch_comparables(asset), req.submission.size);
                let params = ctx.ledger.params();
                let bad = match (class, estimate) {
                    (Classification::InsufficientData, e) => e.is_none(),
                    (_, None) => false,
                    (_, Some(e)) => {
                        let bp = if report.severity == Severity::Critical {
                            params.valuation_flag_bp
                        } else {
                            params.valuation_adjust_bp
                        };
                        deviation_exceeds(req.declared_value, e, bp)
                    }
                };
                yes(bad, Basis::LedgerState)
            }
            Classification::KycFail | Classification::AmlHit | Classification::NotAccredited => {
                let second = ctx.oracle.check_identity_secondary(owner, at)?;
                let bad = match class {
                    Classification::KycFail => !second.kyc_passed,
                    Classification::AmlHit => second.aml_flagged,
                    _ => !second.accredited,
                };
                yes(bad, Basis::SecondSource)
            }
            _ => None,
        }
    }

    /// Plans the emergency response to a verified critical report.
    fn plan(&self, report: &AgentReport, ctx: &GovCtx<'_>) -> Intervention {
        let class = report.classification.expect("finding");
        let token = match &report.subject {
            Subject::Token(t) => Some(t.clone()),
            Subject::Asset(a) => ctx.ledger.token_for_asset(a).cloned(),
            Subject::Address(_) => report.evidence.notes.get("token").map(TokenId::new),
        };
        let mut blacklist = Vec::new();
        if matches!(class, Classification::WashTrading | Classification::FlaggedCounterparty) {
            let mut set = BTreeSet::new();
            for addr in &report.evidence.addresses {
                set.insert(addr.clone());
                // Other wallets of the same person go with it.
                if let Some(identity) = ctx.pipeline.identity_of(addr) {
                    set.extend(ctx.pipeline.addresses_of(identity));
                }
            }
            blacklist = set.into_iter().collect();
        }
        let (responsible, misconduct) = self.responsible(report, class, ctx);
        let mut sources = vec![report.reference()];
        sources.extend(
            self.seen
                .iter()
                .filter(|o| {
                    o.agent_id != report.agent_id
                        && o.subject == report.subject
                        && o.classification == report.classification
                })
                .map(AgentReport::reference),
        );
        Intervention { report: report.clone(), sources, token, blacklist, responsible, misconduct }
    }

    /// Agents whose approvals covered the confirmed bad fact.
    fn responsible(
        &self,
        report: &AgentReport,
        class: Classification,
        ctx: &GovCtx<'_>,
    ) -> (Vec<AgentId>, Option<Misconduct>) {
        use Classification::*;
        let (roles, misconduct): (&[Role], Misconduct) = match class {
            TitleMismatch | LienFound | DoubleTokenization | ForgedDocument | StaleAppraisal => {
                (&[Role::Verification], Misconduct::Negligence)
            }
            ValueDiscrepancy | InsufficientData => (&[Role::Verification, Role::Valuation], Misconduct::Negligence),
            KycFail | AmlHit | NotAccredited => (&[Role::Compliance], Misconduct::Negligence),
            WashTrading => {
                let agents = self.eligible_for_blame(report.evidence.agents.iter().cloned(), report, ctx);
                let m = (!agents.is_empty()).then_some(Misconduct::Malice);
                return (agents, m);
            }
            VolumeSpike | RapidResale | FlaggedCounterparty => return (Vec::new(), None),
        };
        let Subject::Asset(asset) = &report.subject else { return (Vec::new(), None) };
        let approvers = ctx
            .ledger
            .request_approvals(asset)
            .map(|r| {
                r.approvals.iter().filter(|(_, role)| roles.contains(role)).map(|(id, _)| id.clone()).collect::<Vec<_>>()
            })
            .unwrap_or_default();
        let agents = self.eligible_for_blame(approvers.into_iter(), report, ctx);
        let m = (!agents.is_empty()).then_some(misconduct);
        (agents, m)
    }

    fn eligible_for_blame(
        &self,
        candidates: impl Iterator<Item = AgentId>,
        report: &AgentReport,
        ctx: &GovCtx<'_>,
    ) -> Vec<AgentId> {
        let set: BTreeSet<AgentId> = candidates
            .filter(|a| *a != report.agent_id)
            .filter(|a| ctx.staking.get(a).is_some_and(|r| r.status != AgentStatus::Barred))
            .collect();
        set.into_iter().collect()
    }

    /// Carries out an intervention in ledger order: freeze, blacklist,
    /// incident record, slashes.
    fn execute(&mut self, plan: Intervention, ctx: &mut GovCtx<'_>) -> Vec<GovernanceAction> {
        let tick = ctx.tick;
        let class = plan.report.classification.expect("finding");
        let incident_class = IncidentClass::of(class);
        let incident_id = self.incidents.len() as u64 + 1;
        let mut actions = Vec::new();

        if let Some(token) = &plan.token {
            let reason = format!("{incident_class}: {class} (incident {incident_id})");
            if let Ok(Some(_)) = ctx.ledger.set_frozen(&self.cap, token, true, &reason) {
                actions.push(GovernanceAction::FreezeToken { token_id: token.clone(), reason });
            }
            for addr in &plan.blacklist {
                let already = ctx.ledger.token(token).is_some_and(|c| c.blacklist.contains(addr));
                if !already && ctx.ledger.update_whitelist(&self.cap, token, addr, WhitelistOp::Blacklist).is_ok() {
                    actions.push(GovernanceAction::BlacklistAddress { token_id: token.clone(), address: addr.clone() });
                }
            }
        }

        let params = ctx.ledger.params().clone();
        let (bp, rate) = match plan.misconduct {
            Some(Misconduct::Malice) => (params.slash_malice_bp, params.penalty_malice),
            _ => (params.slash_negligence_bp, params.penalty_negligence),
        };
        let label = match plan.misconduct {
            Some(Misconduct::Malice) => "malice",
            _ => "negligence",
        };
        let slashes: Vec<GovernanceAction> = plan
            .responsible
            .iter()
            .map(|agent_id| GovernanceAction::SlashStake {
                agent_id: agent_id.clone(),
                amount_bp: bp,
                reason: format!("{label}: {incident_class} incident {incident_id}"),
            })
            .collect();

        let mut listed: Vec<String> = actions.iter().map(ToString::to_string).collect();
        listed.extend(slashes.iter().map(ToString::to_string));
        ctx.ledger.record_incident(
            &self.cap,
            IncidentEntry {
                incident_id,
                classification: incident_class.to_string(),
                subject: plan.report.subject.to_string(),
                source_reports: plan.sources.clone(),
                responsible_agents: plan.responsible.clone(),
                actions: listed,
            },
        );
        actions.push(GovernanceAction::RecordIncident { incident_id });

        for action in slashes {
            let GovernanceAction::SlashStake { agent_id, amount_bp, reason } = &action else { unreachable!() };
            if ctx.staking.slash_stake(&self.cap, ctx.ledger, agent_id, *amount_bp, reason).is_ok() {
                self.penalties.push(Penalty { agent_id: agent_id.clone(), rate, cause: reason.clone() });
                actions.push(action);
            }
        }

        self.incidents.push(Incident {
            incident_id,
            tick,
            classification: incident_class,
            finding: class,
            subject: plan.report.subject.clone(),
            source_reports: plan.sources,
            verified: true,
            responsible_agents: plan.responsible,
            misconduct: plan.misconduct,
            actions_taken: actions.clone(),
        });
        actions
    }

    fn update_trust(&mut self, ctx: &mut GovCtx<'_>) -> Vec<GovernanceAction> {
        let tick = ctx.tick;
        let penalties = std::mem::take(&mut self.penalties);
        let params = ctx.ledger.params().clone();
        let staking = &*ctx.staking;
        self.trust.apply_tick(tick, &penalties, &params, |id| staking.get(id).is_some_and(|r| r.status != AgentStatus::Barred));

        let mut actions = Vec::new();
        for agent_id in self.trust.below(params.trust_threshold) {
            let barred = ctx.staking.get(&agent_id).is_none_or(|r| r.status == AgentStatus::Barred);
            if barred || ctx.roster.is_under_review(&agent_id) {
                continue;
            }
            let score = self.trust.score(&agent_id).expect("listed");
            ctx.roster.set_under_review(&agent_id, true);
            actions.push(GovernanceAction::RequireReassessment { agent_id: agent_id.clone(), score });
            if self.plans.contains_key(&agent_id) {
                let outcome = self.reassess_agent(&agent_id, ctx);
                self.reassessments.push((tick, agent_id, outcome));
            }
        }
        actions
    }

    /// Applies the scenario's reassessment plan for an agent.
    pub fn reassess_agent(&mut self, agent_id: &AgentId, ctx: &mut GovCtx<'_>) -> Result<ReassessmentOutcome, ReassessError> {
        let plan = self.plans.get(agent_id).cloned().ok_or_else(|| ReassessError::NoPlan(agent_id.clone()))?;
        let tick = ctx.tick;
        let initial = ctx.ledger.params().trust_initial;
        let record = ctx.staking.get(agent_id).cloned().ok_or_else(|| StakingError::UnknownAgent(agent_id.clone()))?;
        match plan {
            ReassessmentPlan::Recertify => {
                if record.status == AgentStatus::Barred {
                    ctx.staking.grant_revetting(agent_id)?;
                }
                let shortfall = record.min_stake.saturating_sub(record.stake);
                ctx.staking.top_up(ctx.ledger, agent_id, shortfall)?;
                self.trust.reset(agent_id, tick, initial, "recertified");
                ctx.roster.set_under_review(agent_id, false);
                ctx.ledger.record_approval(ApprovalEntry {
                    action: ApprovalAction::AgentRecertified,
                    subject: agent_id.to_string(),
                    agent_id: agent_id.clone(),
                    role: record.role,
                    amount: Some(shortfall),
                    note: String::new(),
                });
                Ok(ReassessmentOutcome::Recertified)
            }
            ReassessmentPlan::Replace { replacement } => {
                let Some(spec) = replacement else {
                    return Err(ReassessError::NoReplacementConfigured(agent_id.clone()));
                };
                ctx.staking.bar_agent(&self.cap, ctx.ledger, agent_id, "replaced after reassessment")?;
                ctx.staking.certify_agent(ctx.ledger, &spec.id, spec.role, spec.stake)?;
                self.trust.reset(&spec.id, tick, initial, "certified");
                ctx.ledger.record_approval(ApprovalEntry {
                    action: ApprovalAction::AgentReplaced,
                    subject: agent_id.to_string(),
                    agent_id: spec.id.clone(),
                    role: spec.role,
                    amount: None,
                    note: format!("replaces {agent_id}"),
                });
                ctx.roster.add(spec);
                Ok(ReassessmentOutcome::Replaced)
            }
        }
    }

    fn apply_scheduled_params(&mut self, ctx: &mut GovCtx<'_>) -> Vec<GovernanceAction> {
        let tick = ctx.tick;
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.scheduled).into_iter().partition(|(t, _)| *t <= tick);
        self.scheduled = later;
        let mut actions = Vec::new();
        for (_, update) in due {
            match ctx.ledger.stage_param_change(&self.cap, &update) {
                Ok(_) => actions.push(GovernanceAction::ParamChange { update }),
                Err(e) => self.param_errors.push((tick, format!("{}: {e}", update.field_name()))),
            }
        }
        actions
    }
}

fn check_market_fact(token: &TokenId, report: &AgentReport, class: Classification, ctx: &GovCtx<'_>) -> Option<Basis> {
    let trades = trades_from_ledger(ctx.ledger, token);
    let p = DetectorParams::from(ctx.ledger.params());
    let at = report.tick;
    let named = &report.evidence.addresses;
    let overlaps = |found: &[Address]| named.is_empty() || named.iter().any(|a| found.contains(a));
    let confirmed = match class {
        Classification::WashTrading => {
            monitor::detect_wash_trading(&trades, at, &p).is_some_and(|d| overlaps(&d.addresses))
        }
        Classification::VolumeSpike => monitor::detect_volume_spike(&trades, at, &p).is_some(),
        Classification::RapidResale => {
            monitor::detect_rapid_resale(&trades, at, &p).iter().any(|d| overlaps(&d.addresses))
        }
        Classification::FlaggedCounterparty => {
            return named.iter().find_map(|a| address_flagged_independently(a, Some(token), ctx));
        }
        _ => false,
    };
    confirmed.then_some(Basis::LedgerState)
}

/// Blacklisted on the ledger, or AML-flagged by the second identity source.
fn address_flagged_independently(addr: &Address, token: Option<&TokenId>, ctx: &GovCtx<'_>) -> Option<Basis> {
    let blacklisted = match token {
        Some(t) => ctx.ledger.token(t).is_some_and(|c| c.blacklist.contains(addr)),
        None => ctx.ledger.tokens().any(|c| c.blacklist.contains(addr)),
    };
    if blacklisted {
        return Some(Basis::LedgerState);
    }
    let identity = ctx.pipeline.identity_of(addr)?;
    ctx.oracle
        .check_identity_secondary(identity, ctx.tick)
        .filter(|p| p.aml_flagged)
        .map(|_| Basis::SecondSource)
}

#[cfg(test)]
mod tests;
