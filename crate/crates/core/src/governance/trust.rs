//! Per-agent trust scores.
//!
//! A score starts at `trust_initial` when an agent is certified. Each
//! confirmed incident attributed to the agent multiplies it by
//! `1 − penalty`. An agent with no incident in a tick recovers by
//! `recovery × (1 − score)`, never above `trust_cap`. Scores are stored in
//! millionths, so the usual products (0.8 × 0.7 = 0.56) are exact.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::ledger::GovernanceParams;
use crate::types::{AgentId, Fraction, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrustScore {
    pub score: Fraction,
    pub last_updated_tick: Tick,
}

/// A score change caused by something other than routine recovery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrustEvent {
    pub tick: Tick,
    pub agent_id: AgentId,
    pub before: Fraction,
    pub after: Fraction,
    pub cause: String,
}

/// A penalty to apply to one agent, with its cause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Penalty {
    pub agent_id: AgentId,
    pub rate: Fraction,
    pub cause: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrustBook {
    scores: BTreeMap<AgentId, TrustScore>,
    events: Vec<TrustEvent>,
}

impl TrustBook {
    pub fn score(&self, id: &AgentId) -> Option<Fraction> {
        self.scores.get(id).map(|s| s.score)
    }

    pub fn scores(&self) -> &BTreeMap<AgentId, TrustScore> {
        &self.scores
    }

    pub fn events(&self) -> &[TrustEvent] {
        &self.events
    }

    /// Sets an agent's score outright, as on certification or
    /// recertification.
    pub fn reset(&mut self, id: &AgentId, tick: Tick, value: Fraction, cause: &str) {
        let before = self.score(id).unwrap_or(value);
        self.scores.insert(id.clone(), TrustScore { score: value, last_updated_tick: tick });
        self.events.push(TrustEvent { tick, agent_id: id.clone(), before, after: value, cause: cause.to_owned() });
    }

    /// One tick of score updates: every penalty is applied in order, then
    /// agents that were not penalised and pass `active` recover.
    pub fn apply_tick(
        &mut self,
        tick: Tick,
        penalties: &[Penalty],
        params: &GovernanceParams,
        active: impl Fn(&AgentId) -> bool,
    ) {
        let mut hit = BTreeSet::new();
        for p in penalties {
            let Some(entry) = self.scores.get_mut(&p.agent_id) else { continue };
            let before = entry.score;
            entry.score = before.scale_down_by(p.rate);
            entry.last_updated_tick = tick;
            self.events.push(TrustEvent {
                tick,
                agent_id: p.agent_id.clone(),
                before,
                after: entry.score,
                cause: p.cause.clone(),
            });
            hit.insert(p.agent_id.clone());
        }
        for (id, entry) in &mut self.scores {
            if hit.contains(id) || !active(id) {
                continue;
            }
            let recovered = entry.score.approach_one(params.trust_recovery).min(params.trust_cap);
            // Recovery only ever raises a score; a score above the cap (from
            // a generous initial value) is left where it is.
            if recovered > entry.score {
                entry.score = recovered;
                entry.last_updated_tick = tick;
            }
        }
    }

    /// Agents whose score is strictly below the threshold.
    pub fn below(&self, threshold: Fraction) -> Vec<AgentId> {
        self.scores.iter().filter(|(_, s)| s.score < threshold).map(|(id, _)| id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn penalty(id: &str, micros: u32) -> Penalty {
        Penalty { agent_id: id.into(), rate: Fraction::from_micros(micros), cause: "test".into() }
    }

    fn book_with(id: &str) -> TrustBook {
        let mut b = TrustBook::default();
        b.reset(&id.into(), 0, GovernanceParams::default().trust_initial, "certified");
        b
    }

    #[test]
    fn negligence_penalties_compound_exactly() {
        let p = GovernanceParams::default();
        let mut b = book_with("v");
        b.apply_tick(1, &[penalty("v", 300_000)], &p, |_| true);
        assert_eq!(b.score(&"v".into()), Some(Fraction::from_micros(560_000)));
        let mut b = book_with("v");
        b.apply_tick(1, &[penalty("v", 300_000), penalty("v", 300_000)], &p, |_| true);
        assert_eq!(b.score(&"v".into()), Some(Fraction::from_micros(392_000)));
        assert_eq!(b.below(p.trust_threshold), vec![AgentId::from("v")]);
        let afters: Vec<u32> = b.events().iter().map(|e| e.after.micros()).collect();
        assert_eq!(afters, vec![800_000, 560_000, 392_000]);
    }

    #[test]
    fn recovery_approaches_cap_monotonically() {
        let p = GovernanceParams::default();
        let mut b = book_with("v");
        let mut last = b.score(&"v".into()).unwrap();
        for t in 1..2000 {
            b.apply_tick(t, &[], &p, |_| true);
            let now = b.score(&"v".into()).unwrap();
            assert!(now >= last && now <= p.trust_cap);
            last = now;
        }
        assert_eq!(last, p.trust_cap);
        // One tick of recovery from 0.8: 0.8 + 0.01 × 0.2 = 0.802.
        let mut b = book_with("v");
        b.apply_tick(1, &[], &p, |_| true);
        assert_eq!(b.score(&"v".into()), Some(Fraction::from_micros(802_000)));
    }

    #[test]
    fn inactive_agents_do_not_recover() {
        let p = GovernanceParams::default();
        let mut b = book_with("v");
        b.apply_tick(1, &[], &p, |_| false);
        assert_eq!(b.score(&"v".into()), Some(p.trust_initial));
    }

    proptest! {
        #[test]
        fn scores_stay_in_bounds(ticks in prop::collection::vec(prop::collection::vec((0..3usize, 0..=1_000_000u32), 0..4), 1..60)) {
            let p = GovernanceParams::default();
            let ids = ["a", "b", "c"];
            let mut b = TrustBook::default();
            for id in ids {
                b.reset(&id.into(), 0, p.trust_initial, "certified");
            }
            for (t, incidents) in ticks.iter().enumerate() {
                let pens: Vec<Penalty> = incidents.iter().map(|&(i, r)| penalty(ids[i], r)).collect();
                b.apply_tick(t as Tick + 1, &pens, &p, |_| true);
                for s in b.scores().values() {
                    prop_assert!(s.score <= Fraction::ONE);
                    prop_assert!(s.score <= p.trust_initial.max(p.trust_cap));
                }
            }
        }
    }
}
