//! Simulated external world.
//!
//! Deterministic lookup tables for the land registry, appraisal documents,
//! comparable sales and the KYC/AML identity service, plus a fault switchboard
//! that overlays planted fraud on the primary tables. Every answer is a pure
//! function of the loaded configuration, the query and the logical tick (a
//! fault may activate at a later tick). Anything absent from the
//! configuration gets the most restrictive answer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{AssetId, Cents, IdentityId, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub asset_id: AssetId,
    pub legal_owner: IdentityId,
    #[serde(default)]
    pub liens: u32,
    #[serde(default = "yes")]
    pub exists: bool,
}

impl RegistryRecord {
    fn absent(asset_id: &AssetId) -> Self {
        RegistryRecord {
            asset_id: asset_id.clone(),
            legal_owner: IdentityId::new(""),
            liens: 0,
            exists: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppraisalDoc {
    pub asset_id: AssetId,
    pub declared_value: Cents,
    pub issued_months_ago: u32,
    #[serde(default = "yes")]
    pub appraiser_signature_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparableSale {
    /// Cents per size unit.
    pub unit_price: Cents,
    pub size: u64,
    #[serde(default)]
    pub months_ago: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityProfile {
    pub identity_id: IdentityId,
    #[serde(default)]
    pub kyc_passed: bool,
    #[serde(default)]
    pub accredited: bool,
    #[serde(default)]
    pub aml_flagged: bool,
}

impl IdentityProfile {
    fn unknown(id: &IdentityId) -> Self {
        IdentityProfile {
            identity_id: id.clone(),
            kyc_passed: false,
            accredited: false,
            aml_flagged: false,
        }
    }
}

fn yes() -> bool {
    true
}

/// Fraud planted by a scenario. Faults alter the primary source only unless
/// `both_sources` is set, so a second-source cross-check can expose them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fault {
    LienedTitle {
        asset_id: AssetId,
        #[serde(default = "one")]
        liens: u32,
        #[serde(default)]
        from_tick: Tick,
        #[serde(default)]
        both_sources: bool,
    },
    OwnerMismatch {
        asset_id: AssetId,
        registered_owner: IdentityId,
        #[serde(default)]
        from_tick: Tick,
        #[serde(default)]
        both_sources: bool,
    },
    MissingRecord {
        asset_id: AssetId,
        #[serde(default)]
        from_tick: Tick,
        #[serde(default)]
        both_sources: bool,
    },
    ForgedAppraisal {
        asset_id: AssetId,
        #[serde(default)]
        from_tick: Tick,
    },
    InflatedAppraisal {
        asset_id: AssetId,
        declared_value: Cents,
        #[serde(default)]
        from_tick: Tick,
    },
    StaleAppraisal {
        asset_id: AssetId,
        months: u32,
        #[serde(default)]
        from_tick: Tick,
    },
    AmlFlag {
        identity_id: IdentityId,
        #[serde(default)]
        from_tick: Tick,
        #[serde(default)]
        both_sources: bool,
    },
    KycRevoked {
        identity_id: IdentityId,
        #[serde(default)]
        from_tick: Tick,
        #[serde(default)]
        both_sources: bool,
    },
}

fn one() -> u32 {
    1
}

impl Fault {
    fn active(&self, tick: Tick, secondary: bool) -> bool {
        let (from, both) = match self {
            Fault::LienedTitle { from_tick, both_sources, .. }
            | Fault::OwnerMismatch { from_tick, both_sources, .. }
            | Fault::MissingRecord { from_tick, both_sources, .. }
            | Fault::AmlFlag { from_tick, both_sources, .. }
            | Fault::KycRevoked { from_tick, both_sources, .. } => (*from_tick, *both_sources),
            Fault::ForgedAppraisal { from_tick, .. }
            | Fault::InflatedAppraisal { from_tick, .. }
            | Fault::StaleAppraisal { from_tick, .. } => (*from_tick, false),
        };
        tick >= from && (!secondary || both)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub registry: Vec<RegistryRecord>,
    /// Independent second registry feed used for cross-checking.
    pub registry_secondary: Vec<RegistryRecord>,
    pub appraisals: Vec<AppraisalDoc>,
    pub comparables: BTreeMap<AssetId, Vec<ComparableSale>>,
    pub identities: Vec<IdentityProfile>,
    pub identities_secondary: Vec<IdentityProfile>,
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleConfigError {
    #[error("comparable sale for {0} has zero unit price or size")]
    DegenerateComparable(AssetId),
    #[error("duplicate {table} entry for {key}")]
    Duplicate { table: &'static str, key: String },
}

/// Read-only oracle service built from an [`OracleConfig`].
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    registry: BTreeMap<AssetId, RegistryRecord>,
    registry_secondary: BTreeMap<AssetId, RegistryRecord>,
    appraisals: BTreeMap<AssetId, AppraisalDoc>,
    comparables: BTreeMap<AssetId, Vec<ComparableSale>>,
    identities: BTreeMap<IdentityId, IdentityProfile>,
    identities_secondary: BTreeMap<IdentityId, IdentityProfile>,
    faults: Vec<Fault>,
}

fn index<K: Ord + Clone + ToString, V>(
    table: &'static str,
    rows: Vec<V>,
    key: impl Fn(&V) -> &K,
) -> Result<BTreeMap<K, V>, OracleConfigError> {
    let mut out = BTreeMap::new();
    for row in rows {
        let k = key(&row).clone();
        if out.contains_key(&k) {
            return Err(OracleConfigError::Duplicate { table, key: k.to_string() });
        }
        out.insert(k, row);
    }
    Ok(out)
}

impl Oracle {
    pub fn from_config(cfg: OracleConfig) -> Result<Self, OracleConfigError> {
        for (asset, sales) in &cfg.comparables {
            if sales.iter().any(|s| s.unit_price == 0 || s.size == 0) {
                return Err(OracleConfigError::DegenerateComparable(asset.clone()));
            }
        }
        Ok(Oracle {
            registry: index("registry", cfg.registry, |r| &r.asset_id)?,
            registry_secondary: index("registry_secondary", cfg.registry_secondary, |r| {
                &r.asset_id
            })?,
            appraisals: index("appraisals", cfg.appraisals, |a| &a.asset_id)?,
            comparables: cfg.comparables,
            identities: index("identities", cfg.identities, |p| &p.identity_id)?,
            identities_secondary: index("identities_secondary", cfg.identities_secondary, |p| {
                &p.identity_id
            })?,
            faults: cfg.faults,
        })
    }

    fn registry_with_faults(&self, mut rec: RegistryRecord, tick: Tick, secondary: bool) -> RegistryRecord {
        for fault in self.faults.iter().filter(|f| f.active(tick, secondary)) {
            match fault {
                Fault::LienedTitle { asset_id, liens, .. } if *asset_id == rec.asset_id => {
                    rec.liens = *liens;
                }
                Fault::OwnerMismatch { asset_id, registered_owner, .. }
                    if *asset_id == rec.asset_id =>
                {
                    rec.legal_owner = registered_owner.clone();
                }
                Fault::MissingRecord { asset_id, .. } if *asset_id == rec.asset_id => {
                    rec = RegistryRecord::absent(asset_id);
                }
                _ => {}
            }
        }
        rec
    }

    /// Land-registry lookup; unknown assets come back with `exists = false`.
    pub fn query_registry(&self, asset: &AssetId, tick: Tick) -> RegistryRecord {
        let base = self.registry.get(asset).cloned().unwrap_or_else(|| RegistryRecord::absent(asset));
        self.registry_with_faults(base, tick, false)
    }

    /// Second registry feed, if one is configured for this asset.
    pub fn query_registry_secondary(&self, asset: &AssetId, tick: Tick) -> Option<RegistryRecord> {
        let base = self.registry_secondary.get(asset)?.clone();
        Some(self.registry_with_faults(base, tick, true))
    }

    /// The appraisal document on file for an asset.
    pub fn appraisal(&self, asset: &AssetId, tick: Tick) -> Option<AppraisalDoc> {
        let mut doc = self.appraisals.get(asset)?.clone();
        for fault in self.faults.iter().filter(|f| f.active(tick, false)) {
            match fault {
                Fault::ForgedAppraisal { asset_id, .. } if asset_id == asset => {
                    doc.appraiser_signature_valid = false;
                }
                Fault::InflatedAppraisal { asset_id, declared_value, .. } if asset_id == asset => {
                    doc.declared_value = *declared_value;
                }
                Fault::StaleAppraisal { asset_id, months, .. } if asset_id == asset => {
                    doc.issued_months_ago = *months;
                }
                _ => {}
            }
        }
        Some(doc)
    }

    pub fn fetch_comparables(&self, asset: &AssetId) -> Vec<ComparableSale> {
        self.comparables.get(asset).cloned().unwrap_or_default()
    }

    fn identity_with_faults(&self, mut p: IdentityProfile, tick: Tick, secondary: bool) -> IdentityProfile {
        for fault in self.faults.iter().filter(|f| f.active(tick, secondary)) {
            match fault {
                Fault::AmlFlag { identity_id, .. } if *identity_id == p.identity_id => {
                    p.aml_flagged = true;
                }
                Fault::KycRevoked { identity_id, .. } if *identity_id == p.identity_id => {
                    p.kyc_passed = false;
                }
                _ => {}
            }
        }
        p
    }

    /// KYC/AML profile; unknown identities fail every check.
    pub fn check_identity(&self, id: &IdentityId, tick: Tick) -> IdentityProfile {
        let base = self.identities.get(id).cloned().unwrap_or_else(|| IdentityProfile::unknown(id));
        self.identity_with_faults(base, tick, false)
    }

    pub fn check_identity_secondary(&self, id: &IdentityId, tick: Tick) -> Option<IdentityProfile> {
        let base = self.identities_secondary.get(id)?.clone();
        Some(self.identity_with_faults(base, tick, true))
    }

    pub fn knows_identity(&self, id: &IdentityId) -> bool {
        self.identities.contains_key(id)
    }
}
