//! Agent stake registry: certification, slashing, rewards and top-ups.
//!
//! Each agent's record doubles as its non-transferable bound stake; there is
//! no operation that moves stake between agents. Every stake movement is
//! logged on the ledger, so `deposited + rewarded == Σ stake + slashed` holds
//! after any sequence of operations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::{ApprovalAction, ApprovalEntry, GovernanceCap, Ledger, SlashRecord};
use crate::types::{apply_bp_floor, AgentId, Role, BP_DENOM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Certified,
    Suspended,
    Barred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentRecord {
    pub agent_id: AgentId,
    pub role: Role,
    pub stake: u64,
    pub min_stake: u64,
    pub status: AgentStatus,
    /// Set by an external re-vetting process; lets a barred agent re-stake.
    pub revetted: bool,
}

impl AgentRecord {
    pub fn is_certified(&self) -> bool {
        self.status == AgentStatus::Certified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StakingError {
    #[error("stake {offered} below minimum {min} for {role}")]
    InsufficientStake { role: Role, offered: u64, min: u64 },
    #[error("agent {0} is barred")]
    BarredAgent(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} is not certified")]
    NotCertified(AgentId),
    #[error("agent {0} is already registered")]
    AlreadyRegistered(AgentId),
    #[error("slash of {0}bp exceeds 10000bp")]
    InvalidBasisPoints(u32),
}

/// Running totals used for the conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StakeTotals {
    pub deposited: u64,
    pub rewarded: u64,
    pub slashed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct StakeRegistry {
    agents: BTreeMap<AgentId, AgentRecord>,
    min_stake: BTreeMap<Role, u64>,
    default_min_stake: u64,
    totals: StakeTotals,
}

fn audit(action: ApprovalAction, rec: &AgentRecord, amount: u64, note: &str) -> ApprovalEntry {
    ApprovalEntry {
        action,
        subject: rec.agent_id.to_string(),
        agent_id: rec.agent_id.clone(),
        role: rec.role,
        amount: Some(amount),
        note: note.to_owned(),
    }
}

impl StakeRegistry {
    pub fn new(default_min_stake: u64, per_role: BTreeMap<Role, u64>) -> Self {
        StakeRegistry {
            agents: BTreeMap::new(),
            min_stake: per_role,
            default_min_stake,
            totals: StakeTotals::default(),
        }
    }

    pub fn min_stake_for(&self, role: Role) -> u64 {
        self.min_stake.get(&role).copied().unwrap_or(self.default_min_stake)
    }

    pub fn get(&self, id: &AgentId) -> Option<&AgentRecord> {
        self.agents.get(id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentRecord> {
        self.agents.values()
    }

    pub fn totals(&self) -> StakeTotals {
        self.totals
    }

    pub fn is_certified(&self, id: &AgentId) -> bool {
        self.agents.get(id).is_some_and(AgentRecord::is_certified)
    }

    fn get_mut(&mut self, id: &AgentId) -> Result<&mut AgentRecord, StakingError> {
        self.agents.get_mut(id).ok_or_else(|| StakingError::UnknownAgent(id.clone()))
    }

    /// Admits an agent with a security deposit of `stake` units.
    ///
    /// A barred agent may only come back after re-vetting, and re-staking
    /// then adds to whatever remains of its old deposit.
    pub fn certify_agent(
        &mut self,
        ledger: &mut Ledger,
        agent_id: &AgentId,
        role: Role,
        stake: u64,
    ) -> Result<AgentRecord, StakingError> {
        let min = self.min_stake_for(role);
        if let Some(existing) = self.agents.get(agent_id) {
            if existing.status != AgentStatus::Barred {
                return Err(StakingError::AlreadyRegistered(agent_id.clone()));
            }
            if !existing.revetted {
                return Err(StakingError::BarredAgent(agent_id.clone()));
            }
            if existing.stake + stake < min {
                return Err(StakingError::InsufficientStake { role, offered: existing.stake + stake, min });
            }
        } else if stake < min {
            return Err(StakingError::InsufficientStake { role, offered: stake, min });
        }

        let rec = self.agents.entry(agent_id.clone()).or_insert_with(|| AgentRecord {
            agent_id: agent_id.clone(),
            role,
            stake: 0,
            min_stake: min,
            status: AgentStatus::Certified,
            revetted: false,
        });
        rec.role = role;
        rec.min_stake = min;
        rec.stake += stake;
        rec.status = AgentStatus::Certified;
        rec.revetted = false;
        self.totals.deposited += stake;
        let rec = rec.clone();
        ledger.record_approval(audit(ApprovalAction::AgentCertified, &rec, stake, ""));
        Ok(rec)
    }

    /// Forfeits `floor(stake × amount_bp / 10000)` units.
    pub fn slash_stake(
        &mut self,
        cap: &GovernanceCap,
        ledger: &mut Ledger,
        agent_id: &AgentId,
        amount_bp: u32,
        reason: &str,
    ) -> Result<(u64, AgentRecord), StakingError> {
        if u64::from(amount_bp) > BP_DENOM {
            return Err(StakingError::InvalidBasisPoints(amount_bp));
        }
        let rec = self.get_mut(agent_id)?;
        if rec.status == AgentStatus::Barred {
            return Err(StakingError::BarredAgent(agent_id.clone()));
        }
        let slashed = apply_bp_floor(rec.stake, amount_bp);
        rec.stake -= slashed;
        if rec.stake == 0 {
            rec.status = AgentStatus::Barred;
        } else if rec.stake < rec.min_stake {
            rec.status = AgentStatus::Suspended;
        }
        let rec = rec.clone();
        self.totals.slashed += slashed;
        ledger.record_slash(
            cap,
            SlashRecord {
                agent_id: agent_id.clone(),
                amount_bp,
                slashed,
                stake_after: rec.stake,
                reason: reason.to_owned(),
            },
        );
        Ok((slashed, rec))
    }

    /// Credits a participation fee to a certified agent.
    pub fn reward_agent(
        &mut self,
        ledger: &mut Ledger,
        agent_id: &AgentId,
        amount: u64,
    ) -> Result<AgentRecord, StakingError> {
        let rec = self.get_mut(agent_id)?;
        if rec.status != AgentStatus::Certified {
            return Err(StakingError::NotCertified(agent_id.clone()));
        }
        rec.stake += amount;
        let rec = rec.clone();
        self.totals.rewarded += amount;
        ledger.record_approval(audit(ApprovalAction::StakeReward, &rec, amount, ""));
        Ok(rec)
    }

    /// Adds stake. Restores certification once the minimum is met, unless
    /// the agent is barred and has not been re-vetted.
    pub fn top_up(
        &mut self,
        ledger: &mut Ledger,
        agent_id: &AgentId,
        amount: u64,
    ) -> Result<AgentRecord, StakingError> {
        let rec = self.get_mut(agent_id)?;
        rec.stake += amount;
        let may_restore = rec.status != AgentStatus::Barred || rec.revetted;
        if may_restore && rec.stake >= rec.min_stake {
            rec.status = AgentStatus::Certified;
            rec.revetted = false;
        }
        let rec = rec.clone();
        self.totals.deposited += amount;
        ledger.record_approval(audit(ApprovalAction::StakeTopUp, &rec, amount, ""));
        Ok(rec)
    }

    /// Removes an agent from service without touching its stake.
    pub fn bar_agent(
        &mut self,
        _cap: &GovernanceCap,
        ledger: &mut Ledger,
        agent_id: &AgentId,
        reason: &str,
    ) -> Result<AgentRecord, StakingError> {
        let rec = self.get_mut(agent_id)?;
        rec.status = AgentStatus::Barred;
        rec.revetted = false;
        let rec = rec.clone();
        ledger.record_approval(audit(ApprovalAction::AgentBarred, &rec, rec.stake, reason));
        Ok(rec)
    }

    pub fn grant_revetting(&mut self, agent_id: &AgentId) -> Result<(), StakingError> {
        self.get_mut(agent_id)?.revetted = true;
        Ok(())
    }

    /// `deposited + rewarded == Σ stake + slashed`.
    pub fn conserved(&self) -> bool {
        let held: u128 = self.agents.values().map(|a| u128::from(a.stake)).sum();
        u128::from(self.totals.deposited) + u128::from(self.totals.rewarded)
            == held + u128::from(self.totals.slashed)
    }

    /// Checks per-record invariants, returning the first offending agent.
    pub fn check_invariants(&self) -> Result<(), AgentId> {
        for rec in self.agents.values() {
            if rec.status == AgentStatus::Certified && rec.stake < rec.min_stake {
                return Err(rec.agent_id.clone());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::ledger::{Capabilities, EventBody, GovernanceParams};

    fn setup() -> (StakeRegistry, Ledger, Capabilities) {
        let (ledger, caps) = Ledger::new(GovernanceParams::default()).unwrap();
        (StakeRegistry::new(1000, BTreeMap::new()), ledger, caps)
    }

    fn id(s: &str) -> AgentId {
        s.into()
    }

    #[test]
    fn certify_at_minimum() {
        let (mut reg, mut ledger, _) = setup();
        let rec = reg.certify_agent(&mut ledger, &id("ver-1"), Role::Verification, 1000).unwrap();
        assert_eq!(rec.status, AgentStatus::Certified);
        assert_eq!(ledger.events().len(), 1);
        let err = reg.certify_agent(&mut ledger, &id("ver-2"), Role::Verification, 999).unwrap_err();
        assert!(matches!(err, StakingError::InsufficientStake { offered: 999, min: 1000, .. }));
    }

    #[test]
    fn negligence_slash() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        let (slashed, rec) =
            reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 2000, "negligence").unwrap();
        assert_eq!((slashed, rec.stake), (200, 800));
        // min is 1000, so 800 suspends.
        assert_eq!(rec.status, AgentStatus::Suspended);

        let mut lenient = StakeRegistry::new(500, BTreeMap::new());
        lenient.certify_agent(&mut ledger, &id("w"), Role::Verification, 1000).unwrap();
        let (_, rec) =
            lenient.slash_stake(&caps.governance, &mut ledger, &id("w"), 2000, "n").unwrap();
        assert_eq!(rec.status, AgentStatus::Certified);
    }

    #[test]
    fn malice_slash_bars() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        let (slashed, rec) =
            reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 10_000, "malice").unwrap();
        assert_eq!((slashed, rec.stake, rec.status), (1000, 0, AgentStatus::Barred));
        assert!(matches!(
            reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 5000),
            Err(StakingError::BarredAgent(_))
        ));
    }

    #[test]
    fn zero_slash_still_logged() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        let (slashed, rec) = reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 0, "audit").unwrap();
        assert_eq!((slashed, rec.stake), (0, 1000));
        assert!(matches!(&ledger.events().last().unwrap().body, EventBody::Slash(s) if s.slashed == 0));
        assert!(matches!(
            reg.slash_stake(&caps.governance, &mut ledger, &id("ghost"), 10, "x"),
            Err(StakingError::UnknownAgent(_))
        ));
    }

    #[test]
    fn rewards() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        assert_eq!(reg.reward_agent(&mut ledger, &id("v"), 10).unwrap().stake, 1010);
        let n = ledger.events().len();
        assert_eq!(reg.reward_agent(&mut ledger, &id("v"), 0).unwrap().stake, 1010);
        assert_eq!(ledger.events().len(), n + 1);
        reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 5000, "x").unwrap();
        assert_eq!(reg.reward_agent(&mut ledger, &id("v"), 10), Err(StakingError::NotCertified(id("v"))));
    }

    #[test]
    fn top_up_restores_certification() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 2000, "n").unwrap();
        let rec = reg.top_up(&mut ledger, &id("v"), 0).unwrap();
        assert_eq!((rec.stake, rec.status), (800, AgentStatus::Suspended));
        let rec = reg.top_up(&mut ledger, &id("v"), 200).unwrap();
        assert_eq!((rec.stake, rec.status), (1000, AgentStatus::Certified));
    }

    #[test]
    fn barred_needs_revetting() {
        let (mut reg, mut ledger, caps) = setup();
        reg.certify_agent(&mut ledger, &id("v"), Role::Verification, 1000).unwrap();
        reg.slash_stake(&caps.governance, &mut ledger, &id("v"), 10_000, "m").unwrap();
        let rec = reg.top_up(&mut ledger, &id("v"), 5000).unwrap();
        assert_eq!(rec.status, AgentStatus::Barred);
        reg.grant_revetting(&id("v")).unwrap();
        let rec = reg.top_up(&mut ledger, &id("v"), 0).unwrap();
        assert_eq!((rec.stake, rec.status), (5000, AgentStatus::Certified));
        assert!(reg.conserved());
    }

    #[derive(Debug, Clone)]
    enum StakeOp {
        Certify(usize, u64),
        Slash(usize, u32),
        Reward(usize, u64),
        TopUp(usize, u64),
        Revet(usize),
        Bar(usize),
    }

    fn stake_op() -> impl Strategy<Value = StakeOp> {
        prop_oneof![
            (0..4usize, 0..3000u64).prop_map(|(a, s)| StakeOp::Certify(a, s)),
            (0..4usize, 0..=10_000u32).prop_map(|(a, b)| StakeOp::Slash(a, b)),
            (0..4usize, 0..50u64).prop_map(|(a, s)| StakeOp::Reward(a, s)),
            (0..4usize, 0..1500u64).prop_map(|(a, s)| StakeOp::TopUp(a, s)),
            (0..4usize).prop_map(StakeOp::Revet),
            (0..4usize).prop_map(StakeOp::Bar),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_status(ops in prop::collection::vec(stake_op(), 1..80)) {
            let (mut reg, mut ledger, caps) = setup();
            let ids: Vec<AgentId> = (0..4).map(|i| id(&format!("a{i}"))).collect();
            for op in ops {
                let _ = match op {
                    StakeOp::Certify(a, s) => reg.certify_agent(&mut ledger, &ids[a], Role::Verification, s).map(|_| ()),
                    StakeOp::Slash(a, b) => reg.slash_stake(&caps.governance, &mut ledger, &ids[a], b, "p").map(|_| ()),
                    StakeOp::Reward(a, s) => reg.reward_agent(&mut ledger, &ids[a], s).map(|_| ()),
                    StakeOp::TopUp(a, s) => reg.top_up(&mut ledger, &ids[a], s).map(|_| ()),
                    StakeOp::Revet(a) => reg.grant_revetting(&ids[a]),
                    StakeOp::Bar(a) => reg.bar_agent(&caps.governance, &mut ledger, &ids[a], "p").map(|_| ()),
                };
                prop_assert!(reg.conserved());
                prop_assert!(reg.check_invariants().is_ok());
            }
        }
    }
}
