//! Post-issuance trade surveillance.
//!
//! Rule-based detectors over a sliding window of executed trades:
//!
//! - **Volume spike**: volume in the current window exceeds
//!   `mean + k·σ` of the preceding baseline windows (population σ). Only
//!   evaluated once the trade history covers every baseline window.
//! - **Wash trading**: an address completes at least `R` round trips (a buy
//!   followed by a sell, or a sell followed by a buy, whose amounts overlap
//!   by the configured ratio) inside the wash window.
//! - **Rapid resale**: an address sells within `T` ticks of buying, at a
//!   price that moved by more than the configured basis points.
//! - **Flagged counterparty**: a trade in the current tick touches an
//!   AML-flagged or blacklisted address.
//!
//! The detector functions are pure; [`Monitor`] keeps the trade history and
//! suppresses repeats of a finding while its window is still open.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AgentReport, Classification, Evidence, Severity, Subject};
use crate::ledger::GovernanceParams;
use crate::types::{Address, AgentId, Cents, Tick, TokenId, BP_DENOM};

/// An executed trade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub token_id: TokenId,
    pub from: Address,
    pub to: Address,
    pub amount: u64,
    /// Cents per token.
    pub price: Cents,
    pub tick: Tick,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via_agent: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub volume_window: Tick,
    pub volume_baseline_windows: u32,
    pub volume_k: f64,
    pub wash_window: Tick,
    pub wash_round_trips: u32,
    pub wash_overlap_bp: u32,
    pub resale_window: Tick,
    pub resale_price_bp: u32,
}

impl From<&GovernanceParams> for DetectorParams {
    fn from(p: &GovernanceParams) -> Self {
        DetectorParams {
            volume_window: p.volume_window,
            volume_baseline_windows: p.volume_baseline_windows,
            volume_k: p.volume_k,
            wash_window: p.wash_window,
            wash_round_trips: p.wash_round_trips,
            wash_overlap_bp: p.wash_overlap_bp,
            resale_window: p.resale_window,
            resale_price_bp: p.resale_price_bp,
        }
    }
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams::from(&GovernanceParams::default())
    }
}

/// One detector firing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Detection {
    pub classification: Classification,
    pub severity: Severity,
    /// Addresses implicated; empty for token-wide findings.
    pub addresses: Vec<Address>,
    pub agents: Vec<AgentId>,
    pub detail: BTreeMap<String, String>,
}

/// Trades with `tick` in `(now − len, now]`.
fn window(trades: &[TradeRecord], now: Tick, len: Tick) -> impl Iterator<Item = &TradeRecord> {
    let start = (now + 1).saturating_sub(len);
    trades.iter().filter(move |t| t.tick >= start && t.tick <= now)
}

fn volume_between(trades: &[TradeRecord], start: Tick, end_inclusive: Tick) -> u64 {
    trades
        .iter()
        .filter(|t| t.tick >= start && t.tick <= end_inclusive)
        .map(|t| t.amount)
        .sum()
}

/// Current-window volume and the baseline window volumes, oldest first, or
/// `None` when the history does not yet cover every baseline window.
pub fn volume_windows(trades: &[TradeRecord], now: Tick, p: &DetectorParams) -> Option<(u64, Vec<u64>)> {
    let w = p.volume_window;
    let b = u64::from(p.volume_baseline_windows);
    let span = w * (b + 1);
    if now + 1 < span {
        return None;
    }
    let earliest = now + 1 - span;
    let first_trade = trades.iter().map(|t| t.tick).min()?;
    if first_trade > earliest {
        return None;
    }
    let current = volume_between(trades, now + 1 - w, now);
    let baseline = (1..=b)
        .rev()
        .map(|j| {
            let end = now - j * w;
            volume_between(trades, end + 1 - w, end)
        })
        .collect();
    Some((current, baseline))
}

pub fn detect_volume_spike(trades: &[TradeRecord], now: Tick, p: &DetectorParams) -> Option<Detection> {
    let (current, baseline) = volume_windows(trades, now, p)?;
    let n = baseline.len() as f64;
    let mean = baseline.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = baseline.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let limit = mean + p.volume_k * var.sqrt();
    if (current as f64) <= limit {
        return None;
    }
    let detail = BTreeMap::from([
        ("current_volume".to_owned(), current.to_string()),
        ("baseline_mean".to_owned(), format!("{mean}")),
        ("threshold".to_owned(), format!("{limit}")),
    ]);
    Some(Detection {
        classification: Classification::VolumeSpike,
        severity: Severity::Flag,
        addresses: Vec::new(),
        agents: Vec::new(),
        detail,
    })
}

fn overlapping(a: u64, b: u64, overlap_bp: u32) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    u128::from(lo) * u128::from(BP_DENOM) >= u128::from(overlap_bp) * u128::from(hi)
}

/// Number of completed round trips by `address` among `trades` (taken in
/// order). A leg stays open until an opposite-direction trade with an
/// overlapping amount closes it; a non-matching trade replaces the open leg.
pub fn count_round_trips<'a>(
    trades: impl IntoIterator<Item = &'a TradeRecord>,
    address: &Address,
    overlap_bp: u32,
) -> u32 {
    let mut open: Option<(bool, u64)> = None;
    let mut trips = 0;
    for t in trades {
        if t.from == t.to {
            continue;
        }
        let buy = if &t.to == address {
            true
        } else if &t.from == address {
            false
        } else {
            continue;
        };
        match open {
            Some((dir, amount)) if dir != buy && overlapping(amount, t.amount, overlap_bp) => {
                trips += 1;
                open = None;
            }
            _ => open = Some((buy, t.amount)),
        }
    }
    trips
}

/// One detection per token listing every address with at least `R` round
/// trips in the window, together with the agents that routed its trades.
pub fn detect_wash_trading(trades: &[TradeRecord], now: Tick, p: &DetectorParams) -> Option<Detection> {
    let in_window: Vec<&TradeRecord> = window(trades, now, p.wash_window).collect();
    let addresses: BTreeSet<&Address> =
        in_window.iter().flat_map(|t| [&t.from, &t.to]).collect();
    let mut flagged = Vec::new();
    let mut agents = BTreeSet::new();
    let mut detail = BTreeMap::new();
    for addr in addresses {
        let trips = count_round_trips(in_window.iter().copied(), addr, p.wash_overlap_bp);
        if trips >= p.wash_round_trips {
            agents.extend(
                in_window
                    .iter()
                    .filter(|t| &t.from == addr || &t.to == addr)
                    .filter_map(|t| t.via_agent.clone()),
            );
            detail.insert(format!("round_trips.{addr}"), trips.to_string());
            flagged.push(addr.clone());
        }
    }
    if flagged.is_empty() {
        return None;
    }
    Some(Detection {
        classification: Classification::WashTrading,
        severity: Severity::Critical,
        addresses: flagged,
        agents: agents.into_iter().collect(),
        detail,
    })
}

pub fn detect_rapid_resale(trades: &[TradeRecord], now: Tick, p: &DetectorParams) -> Vec<Detection> {
    let start = (now + 1).saturating_sub(p.resale_window);
    let mut flagged: BTreeMap<Address, (Cents, Cents)> = BTreeMap::new();
    for (i, sell) in trades.iter().enumerate() {
        if sell.tick < start || sell.tick > now || sell.from == sell.to {
            continue;
        }
        let seller = &sell.from;
        let bought = trades[..i]
            .iter()
            .rev()
            .find(|b| &b.to == seller && b.from != b.to && sell.tick - b.tick <= p.resale_window);
        let Some(buy) = bought else { continue };
        if buy.tick > sell.tick || buy.price == 0 {
            continue;
        }
        let moved = u128::from(sell.price.abs_diff(buy.price)) * u128::from(BP_DENOM);
        if moved > u128::from(p.resale_price_bp) * u128::from(buy.price) {
            flagged.entry(seller.clone()).or_insert((buy.price, sell.price));
        }
    }
    flagged
        .into_iter()
        .map(|(addr, (bought, sold))| Detection {
            classification: Classification::RapidResale,
            severity: Severity::Flag,
            addresses: vec![addr],
            agents: Vec::new(),
            detail: BTreeMap::from([
                ("buy_price".to_owned(), bought.to_string()),
                ("sell_price".to_owned(), sold.to_string()),
            ]),
        })
        .collect()
}

pub fn detect_flagged_counterparties(
    trades: &[TradeRecord],
    now: Tick,
    is_flagged: &dyn Fn(&Address) -> bool,
) -> Vec<Detection> {
    let touched: BTreeSet<&Address> = trades
        .iter()
        .filter(|t| t.tick == now)
        .flat_map(|t| [&t.from, &t.to])
        .filter(|a| is_flagged(a))
        .collect();
    touched
        .into_iter()
        .map(|addr| Detection {
            classification: Classification::FlaggedCounterparty,
            severity: Severity::Critical,
            addresses: vec![addr.clone()],
            agents: Vec::new(),
            detail: BTreeMap::new(),
        })
        .collect()
}

/// Runs every detector at `now`, in a fixed order.
pub fn scan(
    trades: &[TradeRecord],
    now: Tick,
    p: &DetectorParams,
    is_flagged: &dyn Fn(&Address) -> bool,
) -> Vec<Detection> {
    let mut out: Vec<Detection> = detect_volume_spike(trades, now, p).into_iter().collect();
    out.extend(detect_wash_trading(trades, now, p));
    out.extend(detect_rapid_resale(trades, now, p));
    out.extend(detect_flagged_counterparties(trades, now, is_flagged));
    out
}

/// The monitoring agent: trade history per token plus repeat suppression.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    history: BTreeMap<TokenId, Vec<TradeRecord>>,
    last_fired: BTreeMap<(TokenId, Classification, Vec<Address>), Tick>,
}

impl Monitor {
    pub fn new() -> Self {
        Monitor { history: BTreeMap::new(), last_fired: BTreeMap::new() }
    }

    pub fn record_trade(&mut self, trade: TradeRecord) {
        self.history.entry(trade.token_id.clone()).or_default().push(trade);
    }

    pub fn trades(&self, token: &TokenId) -> &[TradeRecord] {
        self.history.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenId> {
        self.history.keys()
    }

    /// Scans one token at `now` on behalf of `agent`, emitting a report for
    /// each detection not already reported within that detector's window.
    pub fn monitor_trades(
        &mut self,
        agent: &AgentId,
        token: &TokenId,
        now: Tick,
        p: &DetectorParams,
        is_flagged: &dyn Fn(&Address) -> bool,
    ) -> Vec<AgentReport> {
        let detections = scan(self.trades(token), now, p, is_flagged);
        let mut reports = Vec::new();
        for d in detections {
            let quiet_for = match d.classification {
                Classification::VolumeSpike => p.volume_window,
                Classification::WashTrading => p.wash_window,
                Classification::RapidResale => p.resale_window,
                _ => 1,
            };
            let key = (token.clone(), d.classification, d.addresses.clone());
            if let Some(&at) = self.last_fired.get(&key) {
                if now - at < quiet_for {
                    continue;
                }
            }
            self.last_fired.insert(key, now);
            let mut evidence = Evidence {
                addresses: d.addresses,
                agents: d.agents,
                notes: d.detail,
            };
            evidence.notes.insert("token".into(), token.to_string());
            reports.push(
                AgentReport::finding(agent, Subject::Token(token.clone()), d.severity, d.classification, now)
                    .with_evidence(evidence),
            );
        }
        reports
    }
}
