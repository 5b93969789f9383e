//! The scenario event loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::report::{self, RunReport};
use super::scenario::{Scenario, ScenarioError, ScriptedEvent};
use crate::agents::monitor::{DetectorParams, Monitor, TradeRecord};
use crate::agents::pipeline::{default_jurisdictions, Pipeline, PipelineCtx, WhitelistRejection};
use crate::agents::{AgentReport, Roster};
use crate::governance::{GovCtx, Governance, GovernanceAction};
use crate::ledger::{Capabilities, Ledger, TransferOrder, TransferOutcome};
use crate::oracle::Oracle;
use crate::staking::StakeRegistry;
use crate::types::{Address, IdentityId, Role, Tick, TokenId};

/// Outcome of one whitelist request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WhitelistDecision {
    pub tick: Tick,
    pub token_id: TokenId,
    pub identity: IdentityId,
    pub address: Address,
    pub rejected: Option<WhitelistRejection>,
}

/// A scripted event that could not be carried out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptError {
    pub tick: Tick,
    pub event: String,
    pub error: String,
}

/// Everything the run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub ledger: Ledger,
}

/// Simulation state during a run.
pub struct World {
    pub oracle: Oracle,
    pub ledger: Ledger,
    pub staking: StakeRegistry,
    pub roster: Roster,
    pub pipeline: Pipeline,
    pub monitor: Monitor,
    pub governance: Governance,
    pub reports: Vec<AgentReport>,
    pub actions: Vec<(Tick, GovernanceAction)>,
    pub whitelist: Vec<WhitelistDecision>,
    pub script_errors: Vec<ScriptError>,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let oracle = Oracle::from_config(scenario.oracles.clone())?;
        let (mut ledger, Capabilities { governance, compliance }) = Ledger::new(scenario.params.clone())?;
        let mut staking = StakeRegistry::new(scenario.min_stake.default, scenario.min_stake.per_role.clone());
        let mut gov = Governance::new(governance, scenario.auto_approve_governance, scenario.reassessments.clone());
        for spec in &scenario.agents {
            staking
                .certify_agent(&mut ledger, &spec.id, spec.role, spec.stake)
                .map_err(|e| ScenarioError::Invalid(format!("agent {}: {e}", spec.id)))?;
            gov.register_agent(&spec.id, 0, ledger.params().trust_initial);
        }
        let jurisdictions = scenario.jurisdictions.clone().unwrap_or_else(default_jurisdictions);
        Ok(World {
            oracle,
            ledger,
            staking,
            roster: Roster::new(scenario.agents.clone()),
            pipeline: Pipeline::new(compliance, jurisdictions),
            monitor: Monitor::new(),
            governance: gov,
            reports: Vec::new(),
            actions: Vec::new(),
            whitelist: Vec::new(),
            script_errors: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        })
    }

    fn gov_ctx(&mut self, tick: Tick) -> (&mut Governance, GovCtx<'_>) {
        (
            &mut self.governance,
            GovCtx {
                tick,
                oracle: &self.oracle,
                ledger: &mut self.ledger,
                staking: &mut self.staking,
                roster: &mut self.roster,
                pipeline: &self.pipeline,
            },
        )
    }

    fn trade(&mut self, tick: Tick, order: TransferOrder) {
        let record = TradeRecord {
            token_id: order.token_id.clone(),
            from: order.from.clone(),
            to: order.to.clone(),
            amount: order.amount,
            price: order.price,
            tick,
            via_agent: order.via_agent.clone(),
        };
        if self.ledger.execute_transfer(order) == TransferOutcome::Accepted {
            self.monitor.record_trade(record);
        }
    }

    fn script_error(&mut self, tick: Tick, event: &ScriptedEvent, error: impl ToString) {
        self.script_errors.push(ScriptError { tick, event: format!("{event:?}"), error: error.to_string() });
    }

    /// Delivers one scripted event; returns any reports it produced.
    pub fn deliver(&mut self, tick: Tick, event: &ScriptedEvent) -> Vec<AgentReport> {
        match event {
            ScriptedEvent::Submit(sub) => match self.pipeline.submit_request(&self.oracle, tick, sub.clone()) {
                Ok(notices) => return notices,
                Err(e) => self.script_error(tick, event, e),
            },
            ScriptedEvent::Reappraisal(doc) => {
                if let Err(e) = self.pipeline.reappraisal(tick, doc.clone()) {
                    self.script_error(tick, event, e);
                }
            }
            ScriptedEvent::OwnerDecision { asset_id, decision } => {
                if let Err(e) = self.pipeline.owner_decision(tick, asset_id, *decision) {
                    self.script_error(tick, event, e);
                }
            }
            ScriptedEvent::WhitelistInvestor { token_id, identity, address } => {
                let rejected = self
                    .pipeline
                    .whitelist_investor(&self.oracle, &mut self.ledger, tick, token_id, identity, address)
                    .err();
                self.whitelist.push(WhitelistDecision {
                    tick,
                    token_id: token_id.clone(),
                    identity: identity.clone(),
                    address: address.clone(),
                    rejected,
                });
            }
            ScriptedEvent::Trade { token_id, from, to, amount, price, via_agent } => {
                let order = TransferOrder {
                    token_id: token_id.clone(),
                    from: from.clone(),
                    to: to.clone(),
                    amount: *amount,
                    price: *price,
                    via_agent: via_agent.clone(),
                };
                self.trade(tick, order);
            }
            ScriptedEvent::RandomTrades { token_id, addresses, count, max_amount, price_min, price_max } => {
                for _ in 0..*count {
                    let i = self.rng.random_range(0..addresses.len());
                    let j = (i + self.rng.random_range(1..addresses.len())) % addresses.len();
                    let order = TransferOrder {
                        token_id: token_id.clone(),
                        from: addresses[i].clone(),
                        to: addresses[j].clone(),
                        amount: self.rng.random_range(1..=*max_amount),
                        price: self.rng.random_range(*price_min..=*price_max),
                        via_agent: None,
                    };
                    self.trade(tick, order);
                }
            }
            ScriptedEvent::ParamChange(update) => self.governance.schedule_param_change(tick, *update),
            ScriptedEvent::GovernanceSignoff => {
                let (gov, mut ctx) = self.gov_ctx(tick);
                let done = gov.signoff(&mut ctx);
                self.actions.extend(done.into_iter().map(|a| (tick, a)));
            }
            ScriptedEvent::Unfreeze { token_id, reason } => {
                if let Err(e) = self.governance.unfreeze(&mut self.ledger, token_id, reason) {
                    self.script_error(tick, event, e);
                }
            }
            ScriptedEvent::GrantRevetting { agent_id } => {
                if let Err(e) = self.staking.grant_revetting(agent_id) {
                    self.script_error(tick, event, e);
                }
            }
            ScriptedEvent::TopUp { agent_id, amount } => {
                if let Err(e) = self.staking.top_up(&mut self.ledger, agent_id, *amount) {
                    self.script_error(tick, event, e);
                }
            }
        }
        Vec::new()
    }

    /// Runs the monitoring agent over every token.
    fn monitor_step(&mut self, tick: Tick) -> Vec<AgentReport> {
        let Some(agent) = self.roster.eligible(Role::Monitoring, &self.staking).next().map(|a| a.id.clone()) else {
            return Vec::new();
        };
        let params = DetectorParams::from(self.ledger.params());
        let tokens: Vec<TokenId> = self.monitor.tokens().cloned().collect();
        let (ledger, pipeline, oracle) = (&self.ledger, &self.pipeline, &self.oracle);
        let mut out = Vec::new();
        for token in tokens {
            let is_flagged = |addr: &Address| {
                ledger.token(&token).is_some_and(|c| c.blacklist.contains(addr))
                    || pipeline.identity_of(addr).is_some_and(|id| oracle.check_identity(id, tick).aml_flagged)
            };
            out.extend(self.monitor.monitor_trades(&agent, &token, tick, &params, &is_flagged));
        }
        out
    }

    /// One tick: scripted events, pipeline, monitor, governance.
    pub fn run_tick(&mut self, tick: Tick, events: &[&ScriptedEvent]) {
        self.ledger.begin_tick(tick);
        let mut reports = Vec::new();
        for event in events {
            reports.extend(self.deliver(tick, event));
        }
        let mut ctx = PipelineCtx {
            tick,
            oracle: &self.oracle,
            ledger: &mut self.ledger,
            staking: &mut self.staking,
            roster: &self.roster,
        };
        reports.extend(self.pipeline.step(&mut ctx));
        reports.extend(self.monitor_step(tick));
        let (gov, mut ctx) = self.gov_ctx(tick);
        let actions = gov.governance_tick(&reports, &mut ctx);
        self.actions.extend(actions.into_iter().map(|a| (tick, a)));
        self.reports.extend(reports);
    }
}

/// Runs a scenario from tick 0 to its last tick and evaluates its
/// expectations.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    let mut world = World::new(scenario)?;
    let last = scenario.last_tick();
    let mut timeline = scenario.timeline.iter().peekable();
    for tick in 0..=last {
        let mut due = Vec::new();
        while let Some(entry) = timeline.next_if(|e| e.tick == tick) {
            due.push(&entry.event);
        }
        world.run_tick(tick, &due);
    }
    let report = report::build(scenario, &world, last);
    Ok(RunOutput { report, ledger: world.ledger })
}
