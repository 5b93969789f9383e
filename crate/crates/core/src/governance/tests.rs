use super::*;
use crate::agents::pipeline::{default_jurisdictions, PipelineCtx, RequestState, Submission};
use crate::agents::{Behavior, Evidence};
use crate::ledger::{Capabilities, EventKind, GovernanceParams, TransferOrder};
use crate::oracle::OracleConfig;

const ORACLES: &str = r#"
registry:
  - { asset_id: bldg, legal_owner: alice }
  - { asset_id: shed, legal_owner: alice }
registry_secondary:
  - { asset_id: bldg, legal_owner: alice }
appraisals:
  - { asset_id: bldg, declared_value: 950000000, issued_months_ago: 2 }
  - { asset_id: shed, declared_value: 950000000, issued_months_ago: 2 }
comparables:
  bldg: [{ unit_price: 19000, size: 1 }]
  shed: [{ unit_price: 19000, size: 1 }]
identities:
  - { identity_id: alice, kyc_passed: true, accredited: true }
  - { identity_id: eve, kyc_passed: true, accredited: true }
"#;

struct World {
    oracle: Oracle,
    ledger: Ledger,
    staking: StakeRegistry,
    roster: Roster,
    pipeline: Pipeline,
    gov: Governance,
    tick: Tick,
}

fn spec(id: &str, role: Role, behavior: Behavior) -> AgentSpec {
    AgentSpec { id: id.into(), role, stake: 1000, behavior }
}

fn world(oracles: &str, verifier: Behavior, plans: BTreeMap<AgentId, ReassessmentPlan>, auto: bool) -> World {
    let oracle = Oracle::from_config(serde_yaml::from_str::<OracleConfig>(oracles).unwrap()).unwrap();
    let (mut ledger, Capabilities { governance, compliance }) = Ledger::new(GovernanceParams::default()).unwrap();
    let agents = vec![
        spec("ver-1", Role::Verification, verifier),
        spec("val-1", Role::Valuation, Behavior::Honest),
        spec("cmp-1", Role::Compliance, Behavior::Honest),
        spec("broker", Role::Tokenization, Behavior::Honest),
    ];
    let mut staking = StakeRegistry::new(500, BTreeMap::new());
    let mut gov = Governance::new(governance, auto, plans);
    for a in &agents {
        staking.certify_agent(&mut ledger, &a.id, a.role, a.stake).unwrap();
        gov.register_agent(&a.id, 0, ledger.params().trust_initial);
    }
    World {
        oracle,
        ledger,
        staking,
        roster: Roster::new(agents),
        pipeline: Pipeline::new(compliance, default_jurisdictions()),
        gov,
        tick: 0,
    }
}

fn submission(asset: &str, token: &str, declared: u64) -> Submission {
    Submission {
        asset_id: asset.into(),
        token_id: token.into(),
        owner_identity: "alice".into(),
        owner_address: "alice".into(),
        declared_value: Some(declared),
        size: 50_000,
        supply: 100_000,
        fraction_bp: 4900,
        document_hash: String::new(),
        jurisdiction: "private_placement".into(),
        max_holding_bp: None,
    }
}

impl World {
    /// One tick: pipeline step, then governance over the pipeline's reports
    /// plus `extra`.
    fn tick(&mut self, extra: Vec<AgentReport>) -> Vec<GovernanceAction> {
        self.tick += 1;
        self.ledger.begin_tick(self.tick);
        let mut reports = {
            let mut ctx = PipelineCtx {
                tick: self.tick,
                oracle: &self.oracle,
                ledger: &mut self.ledger,
                staking: &mut self.staking,
                roster: &self.roster,
            };
            self.pipeline.step(&mut ctx)
        };
        reports.extend(extra);
        let mut ctx = GovCtx {
            tick: self.tick,
            oracle: &self.oracle,
            ledger: &mut self.ledger,
            staking: &mut self.staking,
            roster: &mut self.roster,
            pipeline: &self.pipeline,
        };
        self.gov.governance_tick(&reports, &mut ctx)
    }

    fn run_until_quiet(&mut self, ticks: usize) -> Vec<GovernanceAction> {
        (0..ticks).flat_map(|_| self.tick(Vec::new())).collect()
    }

    fn mint_office(&mut self) {
        self.pipeline.submit_request(&self.oracle, self.tick, submission("bldg", "OFFICE_X", 950_000_000)).unwrap();
        self.run_until_quiet(5);
        assert_eq!(self.pipeline.request(&"bldg".into()).unwrap().state, RequestState::Minted);
    }

    fn trade(&mut self, from: &str, to: &str, amount: u64, via: Option<&str>) {
        let order = TransferOrder {
            token_id: "OFFICE_X".into(),
            from: from.into(),
            to: to.into(),
            amount,
            price: 4655,
            via_agent: via.map(AgentId::from),
        };
        assert!(self.ledger.execute_transfer(order).is_accepted());
    }

    fn score(&self, id: &str) -> u32 {
        self.gov.trust().score(&id.into()).unwrap().micros()
    }
}

fn kinds_at(ledger: &Ledger, tick: Tick) -> Vec<EventKind> {
    ledger.events().iter().filter(|e| e.tick == tick).map(|e| e.kind()).collect()
}

#[test]
fn quiet_tick_only_recovers_trust() {
    let mut w = world(ORACLES, Behavior::Honest, BTreeMap::new(), true);
    assert!(w.tick(Vec::new()).is_empty());
    assert_eq!(w.score("ver-1"), 802_000);
    assert!(w.gov.incidents().is_empty());
}

#[test]
fn inflated_value_slashes_colluding_verifier() {
    let mut w = world(ORACLES, Behavior::Colluding, BTreeMap::new(), true);
    w.pipeline.submit_request(&w.oracle, 0, submission("bldg", "OFFICE_X", 1_500_000_000)).unwrap();
    w.tick(Vec::new()); // Submitted -> Verifying
    w.tick(Vec::new()); // colluding approval
    // Undo two ticks of recovery so the penalty lands on exactly 0.8.
    w.gov.register_agent(&"ver-1".into(), w.tick, Fraction::from_micros(800_000));
    let actions = w.tick(Vec::new());
    assert_eq!(
        actions.iter().map(ToString::to_string).collect::<Vec<_>>(),
        vec!["RecordIncident(1)", "SlashStake(ver-1,2000bp)"]
    );
    let incident = &w.gov.incidents()[0];
    assert_eq!(incident.classification, IncidentClass::FraudulentAsset);
    assert_eq!(incident.responsible_agents, vec![AgentId::from("ver-1")]);
    assert!(incident.verified);
    assert_eq!(w.staking.get(&"ver-1".into()).unwrap().stake, 800);
    assert_eq!(w.score("ver-1"), 560_000);
    assert!(w.ledger.events().iter().all(|e| e.kind() != EventKind::Mint));
}

#[test]
fn wash_trading_freezes_blacklists_and_punishes_router() {
    let mut w = world(ORACLES, Behavior::Honest, BTreeMap::new(), true);
    w.mint_office();
    let tok: TokenId = "OFFICE_X".into();
    for addr in ["eve", "eve2"] {
        w.pipeline.whitelist_investor(&w.oracle, &mut w.ledger, w.tick, &tok, &"eve".into(), &addr.into()).unwrap();
    }
    w.tick += 1;
    w.ledger.begin_tick(w.tick);
    w.trade("alice", "eve", 5000, None);
    for _ in 0..3 {
        w.trade("eve", "eve2", 5000, Some("broker"));
        w.trade("eve2", "eve", 5000, Some("broker"));
    }
    let report = AgentReport::finding(&"mon-1".into(), Subject::Token(tok.clone()), Severity::Critical, Classification::WashTrading, w.tick + 1)
        .with_evidence(Evidence { addresses: vec!["eve".into()], agents: vec!["broker".into()], ..Evidence::default() });
    let broker_before = w.score("broker");
    let actions = w.tick(vec![report]);
    let names: Vec<String> = actions.iter().map(ToString::to_string).collect();
    assert_eq!(
        names,
        vec![
            "FreezeToken(OFFICE_X)",
            "BlacklistAddress(eve)",
            "BlacklistAddress(eve2)",
            "RecordIncident(1)",
            "SlashStake(broker,10000bp)",
        ]
    );
    use EventKind::*;
    assert_eq!(kinds_at(&w.ledger, w.tick), vec![Freeze, WhitelistChange, WhitelistChange, IncidentRecord, Slash]);
    assert_eq!(w.gov.incidents()[0].classification, IncidentClass::MarketManipulation);
    assert_eq!(w.staking.get(&"broker".into()).unwrap().status, AgentStatus::Barred);
    // Malice penalty: score × (1 − 0.6).
    assert_eq!(w.score("broker"), broker_before * 4 / 10);

    // A repeat report on the frozen token does nothing further.
    let again = AgentReport::finding(&"mon-1".into(), Subject::Token(tok), Severity::Critical, Classification::WashTrading, w.tick + 1)
        .with_evidence(Evidence { addresses: vec!["eve".into()], ..Evidence::default() });
    let before = w.ledger.events().len();
    assert!(w.tick(vec![again]).is_empty());
    assert_eq!(w.ledger.events().len(), before);
    assert_eq!(w.gov.reviews().last().unwrap().outcome, ReviewOutcome::Duplicate);
}

#[test]
fn unsupported_wash_claim_is_not_verified() {
    let mut w = world(ORACLES, Behavior::Honest, BTreeMap::new(), true);
    w.mint_office();
    let report = AgentReport::finding(&"mon-1".into(), Subject::Token("OFFICE_X".into()), Severity::Critical, Classification::WashTrading, w.tick + 1);
    let actions = w.tick(vec![report]);
    assert!(actions.is_empty());
    assert!(!w.ledger.token(&"OFFICE_X".into()).unwrap().frozen);
    let outcomes: Vec<_> = w.run_until_quiet(6).into_iter().collect();
    assert!(outcomes.is_empty());
    let last = w.gov.reviews().last().unwrap();
    assert_eq!(last.outcome, ReviewOutcome::Dropped);
    assert!(w.gov.incidents().is_empty());
}

#[test]
fn title_mismatch_without_second_source_agreement_is_dropped() {
    let oracles = format!("{ORACLES}faults:\n  - {{ kind: owner_mismatch, asset_id: bldg, registered_owner: zed }}\n");
    let mut w = world(&oracles, Behavior::Honest, BTreeMap::new(), true);
    w.pipeline.submit_request(&w.oracle, 0, submission("bldg", "OFFICE_X", 950_000_000)).unwrap();
    w.tick(Vec::new());
    w.tick(Vec::new());
    assert_eq!(w.pipeline.request(&"bldg".into()).unwrap().state, RequestState::Rejected);
    assert_eq!(w.gov.reviews()[0].outcome, ReviewOutcome::Retained);
    w.run_until_quiet(5);
    let outcomes: Vec<_> = w.gov.reviews().iter().map(|r| r.outcome.clone()).collect();
    assert_eq!(outcomes, vec![ReviewOutcome::Retained, ReviewOutcome::Dropped]);
    assert_eq!(w.gov.reviews()[1].tick, 2 + w.ledger.params().corroboration_ticks);
    assert!(w.gov.incidents().is_empty());
}

#[test]
fn title_mismatch_confirmed_by_second_registry() {
    let oracles = format!(
        "{ORACLES}faults:\n  - {{ kind: owner_mismatch, asset_id: bldg, registered_owner: zed, both_sources: true }}\n"
    );
    let mut w = world(&oracles, Behavior::Honest, BTreeMap::new(), true);
    w.pipeline.submit_request(&w.oracle, 0, submission("bldg", "OFFICE_X", 950_000_000)).unwrap();
    w.tick(Vec::new());
    let actions = w.tick(Vec::new());
    assert_eq!(actions, vec![GovernanceAction::RecordIncident { incident_id: 1 }]);
    assert_eq!(w.gov.reviews()[0].outcome, ReviewOutcome::Verified { basis: Basis::SecondSource });
    // The reporter is never blamed for its own finding.
    assert!(w.gov.incidents()[0].responsible_agents.is_empty());
}

#[test]
fn peer_report_corroborates() {
    let mut w = world(ORACLES, Behavior::Honest, BTreeMap::new(), true);
    let subject = Subject::Address("eve".into());
    let r1 = AgentReport::finding(&"mon-1".into(), subject.clone(), Severity::Flag, Classification::RapidResale, 1);
    w.tick(vec![r1]);
    assert_eq!(w.gov.reviews()[0].outcome, ReviewOutcome::Retained);
    let r2 = AgentReport::finding(&"mon-2".into(), subject, Severity::Flag, Classification::RapidResale, 3);
    w.tick(Vec::new());
    w.tick(vec![r2]);
    let verified = w.gov.reviews().iter().filter(|r| r.outcome == ReviewOutcome::Verified { basis: Basis::PeerReport }).count();
    assert_eq!(verified, 2);
    // Flags are verified but never acted on.
    assert!(w.gov.incidents().is_empty());
}

fn two_frauds(plans: BTreeMap<AgentId, ReassessmentPlan>) -> (World, Vec<GovernanceAction>) {
    let mut w = world(ORACLES, Behavior::Colluding, plans, true);
    w.pipeline.submit_request(&w.oracle, 0, submission("bldg", "OFFICE_X", 1_500_000_000)).unwrap();
    w.pipeline.submit_request(&w.oracle, 0, submission("shed", "SHED", 1_500_000_000)).unwrap();
    w.tick(Vec::new());
    w.tick(Vec::new());
    w.gov.register_agent(&"ver-1".into(), w.tick, Fraction::from_micros(800_000));
    let actions = w.tick(Vec::new());
    (w, actions)
}

#[test]
fn two_negligence_incidents_trigger_replacement() {
    let replacement = spec("ver-2", Role::Verification, Behavior::Honest);
    let plans = BTreeMap::from([(AgentId::from("ver-1"), ReassessmentPlan::Replace { replacement: Some(replacement) })]);
    let (w, actions) = two_frauds(plans);
    assert_eq!(w.score("ver-1"), 392_000);
    assert!(actions.contains(&GovernanceAction::RequireReassessment {
        agent_id: "ver-1".into(),
        score: Fraction::from_micros(392_000)
    }));
    assert_eq!(w.staking.get(&"ver-1".into()).unwrap().status, AgentStatus::Barred);
    assert!(w.staking.is_certified(&"ver-2".into()));
    assert_eq!(w.score("ver-2"), 800_000);
    assert_eq!(w.gov.reassessments()[0].2, Ok(ReassessmentOutcome::Replaced));
    assert_eq!(w.roster.eligible(Role::Verification, &w.staking).map(|a| a.id.as_str()).collect::<Vec<_>>(), vec!["ver-2"]);
}

#[test]
fn replacement_without_substitute_fails() {
    let plans = BTreeMap::from([(AgentId::from("ver-1"), ReassessmentPlan::Replace { replacement: None })]);
    let (w, _) = two_frauds(plans);
    assert_eq!(w.gov.reassessments()[0].2, Err(ReassessError::NoReplacementConfigured("ver-1".into())));
    // Still under review, so it takes no part in approvals.
    assert!(w.roster.is_under_review(&"ver-1".into()));
    assert_eq!(w.roster.eligible(Role::Verification, &w.staking).count(), 0);
}

#[test]
fn recertification_resets_score_and_restores_stake() {
    let plans = BTreeMap::from([(AgentId::from("ver-1"), ReassessmentPlan::Recertify)]);
    let (w, _) = two_frauds(plans);
    let rec = w.staking.get(&"ver-1".into()).unwrap();
    assert_eq!(rec.stake, 640);
    assert!(rec.is_certified());
    assert_eq!(w.score("ver-1"), 800_000);
    assert!(!w.roster.is_under_review(&"ver-1".into()));
}

#[test]
fn scheduled_param_changes() {
    let mut w = world(ORACLES, Behavior::Honest, BTreeMap::new(), true);
    w.gov.schedule_param_change(1, ParamUpdate::VerificationQuorum(2));
    w.gov.schedule_param_change(1, ParamUpdate::TrustThreshold(1.2));
    let actions = w.tick(Vec::new());
    assert_eq!(actions, vec![GovernanceAction::ParamChange { update: ParamUpdate::VerificationQuorum(2) }]);
    assert_eq!(w.gov.param_errors().len(), 1);
    assert_eq!(w.ledger.params().verification_quorum, 1);
    w.tick(Vec::new());
    assert_eq!(w.ledger.params().verification_quorum, 2);
}

#[test]
fn manual_signoff_holds_interventions() {
    let mut w = world(ORACLES, Behavior::Colluding, BTreeMap::new(), false);
    w.pipeline.submit_request(&w.oracle, 0, submission("bldg", "OFFICE_X", 1_500_000_000)).unwrap();
    w.run_until_quiet(3);
    assert!(w.gov.incidents().is_empty());
    assert_eq!(w.gov.queued_interventions(), 1);
    let mut ctx = GovCtx {
        tick: w.tick,
        oracle: &w.oracle,
        ledger: &mut w.ledger,
        staking: &mut w.staking,
        roster: &mut w.roster,
        pipeline: &w.pipeline,
    };
    let actions = w.gov.signoff(&mut ctx);
    assert_eq!(actions.len(), 2);
    assert_eq!(w.gov.incidents().len(), 1);
    assert_eq!(w.staking.get(&"ver-1".into()).unwrap().stake, 800);
}
