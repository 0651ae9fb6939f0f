//! Value types shared by every module: money, identifiers, logical time.
//!
//! All integers that cross a serialization boundary are written as decimal
//! strings so canonical records hash identically in any language. Readers
//! accept either a string or a JSON integer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseIdError {
    #[error("identifier must be non-empty")]
    Empty,
    #[error("identifier longer than {max} characters")]
    TooLong { max: usize },
    #[error("expected identifier of the form {prefix}<n>, got {got:?}")]
    BadFormat { prefix: char, got: String },
}

/// Serde adapter for `u64` carried as a decimal string.
pub mod dec_u64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Int(u64),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Str(s) => parse_decimal(&s).map_err(serde::de::Error::custom),
        }
    }

    pub(crate) fn parse_decimal(s: &str) -> Result<u64, String> {
        // Canonical form only: no sign, no leading zeros.
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0'))
        {
            return Err(format!("not a canonical decimal integer: {s:?}"));
        }
        s.parse::<u64>().map_err(|e| e.to_string())
    }
}

/// Euro amount in cents. Arithmetic is checked; nothing ever wraps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: u64) -> Self {
        Money(cents)
    }

    pub const fn cents(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: Money) -> Option<Money> {
        self.0.checked_add(rhs.0).map(Money)
    }

    pub fn checked_sub(self, rhs: Money) -> Option<Money> {
        self.0.checked_sub(rhs.0).map(Money)
    }

    pub fn min(self, rhs: Money) -> Money {
        Money(self.0.min(rhs.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "€{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        dec_u64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        dec_u64::deserialize(d).map(Money)
    }
}

impl std::iter::Sum for Money {
    /// Panics on overflow; ledger totals are bounded by the checked mint path.
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |acc, m| acc.checked_add(m).expect("money sum overflow"))
    }
}

/// A non-negative ratio in parts per million (`1.0` == 1_000_000).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio(u64);

impl Ratio {
    pub const ONE_PPM: u64 = 1_000_000;
    pub const ZERO: Ratio = Ratio(0);

    pub const fn from_ppm(ppm: u64) -> Self {
        Ratio(ppm)
    }

    pub const fn ppm(self) -> u64 {
        self.0
    }

    /// Rounds a float to the nearest ppm. Rejects negative and non-finite input.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() || v < 0.0 {
            return None;
        }
        let ppm = (v * Self::ONE_PPM as f64).round();
        if ppm > u64::MAX as f64 {
            return None;
        }
        Some(Ratio(ppm as u64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::ONE_PPM as f64
    }

    /// `floor(amount × ratio)`, or `None` if the result does not fit.
    pub fn apply_floor(self, amount: Money) -> Option<Money> {
        let v = u128::from(amount.cents()) * u128::from(self.0) / u128::from(Self::ONE_PPM);
        u64::try_from(v).ok().map(Money::from_cents)
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        dec_u64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        dec_u64::deserialize(d).map(Ratio)
    }
}

/// Journal sequence number; the first event is 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seq(pub u64);

impl fmt::Display for Seq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for Seq {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        dec_u64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Seq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        dec_u64::deserialize(d).map(Seq)
    }
}

/// Caller-supplied logical time. Never read from a wall clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        dec_u64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        dec_u64::deserialize(d).map(Timestamp)
    }
}

const MAX_NAME_LEN: usize = 64;

macro_rules! name_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self, ParseIdError> {
                let id = id.into();
                if id.is_empty() {
                    return Err(ParseIdError::Empty);
                }
                if id.chars().count() > MAX_NAME_LEN {
                    return Err(ParseIdError::TooLong { max: MAX_NAME_LEN });
                }
                Ok($name(id))
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

        impl FromStr for $name {
            type Err = ParseIdError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::new(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

name_id!(
    /// Registered participant (bank, contractor, customer, ...).
    ActorId
);
name_id!(
    /// Code coupling operator tokens to the tax credit they were minted for.
    CreditCode
);
name_id!(
    /// Residential property a tax credit is claimed on.
    PropertyId
);

macro_rules! counter_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let bad = || ParseIdError::BadFormat { prefix: $prefix, got: s.to_string() };
                let digits = s.strip_prefix($prefix).ok_or_else(bad)?;
                dec_u64::parse_decimal(digits).map($name).map_err(|_| bad())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

counter_id!(
    /// Investor token id. Allocated from a counter and never reused.
    TokenId,
    'T'
);
counter_id!(
    /// Binds frozen investor value to exactly one operator mint.
    LinkId,
    'L'
);
counter_id!(
    /// Live operator batch id.
    BatchId,
    'B'
);
