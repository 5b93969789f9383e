//! Shared identifiers, logical time, and exact-arithmetic helpers.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Logical clock value. The simulator never consults wall-clock time.
pub type Tick = u64;

/// Monetary amounts are integer cents.
pub type Cents = u64;

/// One basis point is 1/10000.
pub const BP_DENOM: u64 = 10_000;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Off-ledger asset identifier (a building, an artwork).
    AssetId
);
string_id!(
    /// Token class identifier, e.g. `OFFICE_X`.
    TokenId
);
string_id!(
    /// Ledger address that can hold token units.
    Address
);
string_id!(AgentId);
string_id!(
    /// Real-world identity known to the KYC/AML oracle.
    IdentityId
);

/// Functional role an agent is certified for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Verification,
    Valuation,
    Compliance,
    Tokenization,
    Monitoring,
    Governance,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Verification => "verification",
            Role::Valuation => "valuation",
            Role::Compliance => "compliance",
            Role::Tokenization => "tokenization",
            Role::Monitoring => "monitoring",
            Role::Governance => "governance",
        };
        f.write_str(s)
    }
}

/// A fraction in `[0, 1]` stored as an integer count of millionths.
///
/// Trust scores and thresholds use this so that products such as
/// `0.8 × 0.7 × 0.7` are exact and replay hashes never depend on float
/// formatting. It reads and writes as a plain decimal number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fraction(u32);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("fraction {0} outside [0, 1]")]
pub struct FractionRangeError(pub f64);

impl Fraction {
    pub const SCALE: u32 = 1_000_000;
    pub const ZERO: Fraction = Fraction(0);
    pub const ONE: Fraction = Fraction(Self::SCALE);

    pub const fn from_micros(micros: u32) -> Self {
        assert!(micros <= Self::SCALE);
        Fraction(micros)
    }

    pub fn from_f64(value: f64) -> Result<Self, FractionRangeError> {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(FractionRangeError(value));
        }
        Ok(Fraction((value * f64::from(Self::SCALE)).round() as u32))
    }

    pub fn micros(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / f64::from(Self::SCALE)
    }

    /// `self × (1 − other)`, rounded down.
    pub fn scale_down_by(self, other: Fraction) -> Fraction {
        let keep = u64::from(Self::SCALE - other.0);
        Fraction((u64::from(self.0) * keep / u64::from(Self::SCALE)) as u32)
    }

    /// `self + rate × (1 − self)`, rounded down.
    pub fn approach_one(self, rate: Fraction) -> Fraction {
        let gap = u64::from(Self::SCALE - self.0);
        let step = gap * u64::from(rate.0) / u64::from(Self::SCALE);
        Fraction(self.0 + step as u32)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::SCALE;
        let frac = self.0 % Self::SCALE;
        let digits = format!("{frac:06}");
        let trimmed = digits.trim_end_matches('0');
        if trimmed.is_empty() {
            write!(f, "{whole}")
        } else {
            write!(f, "{whole}.{trimmed}")
        }
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Fraction::from_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Integer division rounding half to even.
pub fn div_round_half_even(num: u128, den: u128) -> u128 {
    assert!(den > 0, "division by zero");
    let q = num / den;
    let r = num % den;
    let twice = r * 2;
    if twice > den || (twice == den && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

/// `floor(amount × bp / 10000)`.
pub fn apply_bp_floor(amount: u64, bp: u32) -> u64 {
    (u128::from(amount) * u128::from(bp) / u128::from(BP_DENOM)) as u64
}

/// True when `|a − b| / b` strictly exceeds `bp / 10000`. `b` must be non-zero.
pub fn deviation_exceeds(a: u64, b: u64, bp: u32) -> bool {
    let diff = u128::from(a.abs_diff(b));
    diff * u128::from(BP_DENOM) > u128::from(bp) * u128::from(b)
}
