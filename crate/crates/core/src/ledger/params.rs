//! Governance parameter store.
//!
//! The parameter set lives on the ledger so every change is an auditable
//! `ParamChange` event. Changes are staged and become effective at the start
//! of the next tick.

use serde::{Deserialize, Serialize};

use crate::types::{Cents, Fraction, Tick, BP_DENOM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernanceParams {
    /// Agents whose trust falls below this are sent for reassessment.
    pub trust_threshold: Fraction,
    pub trust_initial: Fraction,
    /// Recovery ceiling; only recertification resets above it.
    pub trust_cap: Fraction,
    /// Per-tick recovery rate toward 1.
    pub trust_recovery: Fraction,
    pub penalty_negligence: Fraction,
    pub penalty_malice: Fraction,

    pub appraisal_max_age_months: u32,
    /// Deviation above which a declared value is treated as fraudulent.
    pub valuation_flag_bp: u32,
    /// Deviation above which the owner must accept the estimate.
    pub valuation_adjust_bp: u32,
    pub verification_quorum: u32,
    pub slash_negligence_bp: u32,
    pub slash_malice_bp: u32,
    /// Stake units credited to each approving agent on a successful mint.
    pub participation_fee: u64,

    pub volume_window: Tick,
    pub volume_baseline_windows: u32,
    pub volume_k: f64,
    pub wash_window: Tick,
    pub wash_round_trips: u32,
    pub wash_overlap_bp: u32,
    pub resale_window: Tick,
    pub resale_price_bp: u32,
    /// How long an uncorroborated report is retained before it is dropped.
    pub corroboration_ticks: Tick,
}

impl Default for GovernanceParams {
    fn default() -> Self {
        Self {
            trust_threshold: Fraction::from_micros(500_000),
            trust_initial: Fraction::from_micros(800_000),
            trust_cap: Fraction::from_micros(950_000),
            trust_recovery: Fraction::from_micros(10_000),
            penalty_negligence: Fraction::from_micros(300_000),
            penalty_malice: Fraction::from_micros(600_000),
            appraisal_max_age_months: 12,
            valuation_flag_bp: 1500,
            valuation_adjust_bp: 200,
            verification_quorum: 1,
            slash_negligence_bp: 2000,
            slash_malice_bp: 10_000,
            participation_fee: 10,
            volume_window: 10,
            volume_baseline_windows: 5,
            volume_k: 3.0,
            wash_window: 20,
            wash_round_trips: 3,
            wash_overlap_bp: 5000,
            resale_window: 5,
            resale_price_bp: 2000,
            corroboration_ticks: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("{field} = {value} is outside basis-point range [0, 10000]")]
    BasisPoints { field: &'static str, value: u32 },
    #[error("{field} = {value} is outside [0, 1]")]
    Fraction { field: &'static str, value: f64 },
    #[error("{field} must be at least 1")]
    NonPositive { field: &'static str },
    #[error("volume_k must be finite and non-negative, got {0}")]
    SigmaMultiplier(f64),
}

impl GovernanceParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bps = [
            ("valuation_flag_bp", self.valuation_flag_bp),
            ("valuation_adjust_bp", self.valuation_adjust_bp),
            ("slash_negligence_bp", self.slash_negligence_bp),
            ("slash_malice_bp", self.slash_malice_bp),
            ("wash_overlap_bp", self.wash_overlap_bp),
            ("resale_price_bp", self.resale_price_bp),
        ];
        for (field, value) in bps {
            if u64::from(value) > BP_DENOM {
                return Err(ParamError::BasisPoints { field, value });
            }
        }
        let positive = [
            ("verification_quorum", u64::from(self.verification_quorum)),
            ("volume_window", self.volume_window),
            ("volume_baseline_windows", u64::from(self.volume_baseline_windows)),
            ("wash_window", self.wash_window),
            ("wash_round_trips", u64::from(self.wash_round_trips)),
            ("resale_window", self.resale_window),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ParamError::NonPositive { field });
            }
        }
        if !self.volume_k.is_finite() || self.volume_k < 0.0 {
            return Err(ParamError::SigmaMultiplier(self.volume_k));
        }
        Ok(())
    }

    /// Applies `update`, returning the previous and new rendered values.
    pub fn apply(&mut self, update: &ParamUpdate) -> Result<(String, String), ParamError> {
        let mut next = self.clone();
        let old;
        let new;
        macro_rules! set {
            ($field:ident, $v:expr) => {{
                old = next.$field.to_string();
                next.$field = $v;
                new = next.$field.to_string();
            }};
        }
        macro_rules! set_fraction {
            ($field:ident, $v:expr) => {{
                let f = Fraction::from_f64($v).map_err(|_| ParamError::Fraction {
                    field: stringify!($field),
                    value: $v,
                })?;
                set!($field, f)
            }};
        }
        match *update {
            ParamUpdate::TrustThreshold(v) => set_fraction!(trust_threshold, v),
            ParamUpdate::TrustInitial(v) => set_fraction!(trust_initial, v),
            ParamUpdate::TrustCap(v) => set_fraction!(trust_cap, v),
            ParamUpdate::TrustRecovery(v) => set_fraction!(trust_recovery, v),
            ParamUpdate::PenaltyNegligence(v) => set_fraction!(penalty_negligence, v),
            ParamUpdate::PenaltyMalice(v) => set_fraction!(penalty_malice, v),
            ParamUpdate::AppraisalMaxAgeMonths(v) => set!(appraisal_max_age_months, v),
            ParamUpdate::ValuationFlagBp(v) => set!(valuation_flag_bp, v),
            ParamUpdate::ValuationAdjustBp(v) => set!(valuation_adjust_bp, v),
            ParamUpdate::VerificationQuorum(v) => set!(verification_quorum, v),
            ParamUpdate::SlashNegligenceBp(v) => set!(slash_negligence_bp, v),
            ParamUpdate::SlashMaliceBp(v) => set!(slash_malice_bp, v),
            ParamUpdate::ParticipationFee(v) => set!(participation_fee, v),
            ParamUpdate::VolumeWindow(v) => set!(volume_window, v),
            ParamUpdate::VolumeBaselineWindows(v) => set!(volume_baseline_windows, v),
            ParamUpdate::VolumeK(v) => set!(volume_k, v),
            ParamUpdate::WashWindow(v) => set!(wash_window, v),
            ParamUpdate::WashRoundTrips(v) => set!(wash_round_trips, v),
            ParamUpdate::WashOverlapBp(v) => set!(wash_overlap_bp, v),
            ParamUpdate::ResaleWindow(v) => set!(resale_window, v),
            ParamUpdate::ResalePriceBp(v) => set!(resale_price_bp, v),
            ParamUpdate::CorroborationTicks(v) => set!(corroboration_ticks, v),
        }
        next.validate()?;
        *self = next;
        Ok((old, new))
    }
}

/// A change to one named parameter.
///
/// In scenario files this reads as `{ field: verification_quorum, value: 2 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "value", rename_all = "snake_case")]
pub enum ParamUpdate {
    TrustThreshold(f64),
    TrustInitial(f64),
    TrustCap(f64),
    TrustRecovery(f64),
    PenaltyNegligence(f64),
    PenaltyMalice(f64),
    AppraisalMaxAgeMonths(u32),
    ValuationFlagBp(u32),
    ValuationAdjustBp(u32),
    VerificationQuorum(u32),
    SlashNegligenceBp(u32),
    SlashMaliceBp(u32),
    ParticipationFee(Cents),
    VolumeWindow(Tick),
    VolumeBaselineWindows(u32),
    VolumeK(f64),
    WashWindow(Tick),
    WashRoundTrips(u32),
    WashOverlapBp(u32),
    ResaleWindow(Tick),
    ResalePriceBp(u32),
    CorroborationTicks(Tick),
}

impl ParamUpdate {
    pub fn field_name(&self) -> &'static str {
        match self {
            ParamUpdate::TrustThreshold(_) => "trust_threshold",
            ParamUpdate::TrustInitial(_) => "trust_initial",
            ParamUpdate::TrustCap(_) => "trust_cap",
            ParamUpdate::TrustRecovery(_) => "trust_recovery",
            ParamUpdate::PenaltyNegligence(_) => "penalty_negligence",
            ParamUpdate::PenaltyMalice(_) => "penalty_malice",
            ParamUpdate::AppraisalMaxAgeMonths(_) => "appraisal_max_age_months",
            ParamUpdate::ValuationFlagBp(_) => "valuation_flag_bp",
            ParamUpdate::ValuationAdjustBp(_) => "valuation_adjust_bp",
            ParamUpdate::VerificationQuorum(_) => "verification_quorum",
            ParamUpdate::SlashNegligenceBp(_) => "slash_negligence_bp",
            ParamUpdate::SlashMaliceBp(_) => "slash_malice_bp",
            ParamUpdate::ParticipationFee(_) => "participation_fee",
            ParamUpdate::VolumeWindow(_) => "volume_window",
            ParamUpdate::VolumeBaselineWindows(_) => "volume_baseline_windows",
            ParamUpdate::VolumeK(_) => "volume_k",
            ParamUpdate::WashWindow(_) => "wash_window",
            ParamUpdate::WashRoundTrips(_) => "wash_round_trips",
            ParamUpdate::WashOverlapBp(_) => "wash_overlap_bp",
            ParamUpdate::ResaleWindow(_) => "resale_window",
            ParamUpdate::ResalePriceBp(_) => "resale_price_bp",
            ParamUpdate::CorroborationTicks(_) => "corroboration_ticks",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        GovernanceParams::default().validate().unwrap();
    }

    #[test]
    fn trust_threshold_out_of_range() {
        let mut p = GovernanceParams::default();
        let err = p.apply(&ParamUpdate::TrustThreshold(1.2)).unwrap_err();
        assert!(matches!(err, ParamError::Fraction { field: "trust_threshold", .. }));
        assert_eq!(p, GovernanceParams::default());
    }

    #[test]
    fn quorum_zero_rejected() {
        let mut p = GovernanceParams::default();
        assert!(p.apply(&ParamUpdate::VerificationQuorum(0)).is_err());
        let (old, new) = p.apply(&ParamUpdate::VerificationQuorum(2)).unwrap();
        assert_eq!((old.as_str(), new.as_str()), ("1", "2"));
    }

    #[test]
    fn bp_bound() {
        let mut p = GovernanceParams::default();
        assert!(p.apply(&ParamUpdate::SlashMaliceBp(10_001)).is_err());
        assert!(p.apply(&ParamUpdate::SlashMaliceBp(10_000)).is_ok());
    }

    #[test]
    fn update_reads_from_yaml() {
        let u: ParamUpdate =
            serde_yaml::from_str("field: valuation_flag_bp\nvalue: 1000\n").unwrap();
        assert_eq!(u, ParamUpdate::ValuationFlagBp(1000));
    }
}
