//! Operator-token demand forecasting by simple exponential smoothing.
//!
//! ```text
//! level_0 = x_0
//! level_t = α·x_t + (1 − α)·level_{t−1}
//! ```
//!
//! Every horizon value is the final level floored to the cent. α is held
//! exactly as parts per million and the recurrence runs in exact rationals,
//! so results are reproducible to the cent on any platform.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{LedgerEvent, Op};
use crate::types::{dec_u64, Money, Seq};

pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("no demand history to smooth")]
    EmptyHistory,
    #[error("smoothing factor {0} is outside (0, 1]")]
    BadAlpha(f64),
    #[error("horizon must be at least one period")]
    BadHorizon,
}

impl ForecastError {
    pub fn code(&self) -> &'static str {
        match self {
            ForecastError::EmptyHistory => "EMPTY_HISTORY",
            ForecastError::BadAlpha(_) => "BAD_ALPHA",
            ForecastError::BadHorizon => "BAD_HORIZON",
        }
    }
}

/// α in parts per million, `1..=1_000_000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingFactor(u32);

impl SmoothingFactor {
    const SCALE: u32 = 1_000_000;

    pub fn new(alpha: f64) -> Result<Self, ForecastError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ForecastError::BadAlpha(alpha));
        }
        let ppm = (alpha * f64::from(Self::SCALE)).round() as u32;
        if ppm == 0 {
            return Err(ForecastError::BadAlpha(alpha));
        }
        Ok(SmoothingFactor(ppm))
    }

    pub fn ppm(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / f64::from(Self::SCALE)
    }

    pub fn as_ratio(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::from(Self::SCALE))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandForecast {
    #[serde(with = "dec_u64")]
    pub horizon: u64,
    #[serde(with = "dec_u64")]
    pub period_length: u64,
    pub values: Vec<Money>,
    pub method: String,
}

/// Exact final smoothed level of `history`.
pub fn smoothed_level(history: &[Money], alpha: SmoothingFactor) -> Option<BigRational> {
    let (first, rest) = history.split_first()?;
    let a = alpha.as_ratio();
    let keep = BigRational::from_integer(1.into()) - &a;
    let mut level = BigRational::from_integer(first.cents().into());
    for x in rest {
        level = &a * BigRational::from_integer(x.cents().into()) + &keep * level;
    }
    Some(level)
}

fn floor_cents(v: &BigRational) -> Money {
    if v <= &BigRational::zero() {
        return Money::ZERO;
    }
    Money::from_cents(v.floor().to_integer().to_u64().expect("level is bounded by the history maximum"))
}

pub fn forecast_demand(
    history: &[Money],
    horizon: u64,
    alpha: f64,
    period_length: u64,
) -> Result<DemandForecast, ForecastError> {
    let alpha = SmoothingFactor::new(alpha)?;
    if horizon == 0 {
        return Err(ForecastError::BadHorizon);
    }
    let level = smoothed_level(history, alpha).ok_or(ForecastError::EmptyHistory)?;
    let value = floor_cents(&level);
    Ok(DemandForecast {
        horizon,
        period_length,
        values: vec![value; usize::try_from(horizon).map_err(|_| ForecastError::BadHorizon)?],
        method: format!("simple-exponential-smoothing(alpha={:.6})", alpha.as_f64()),
    })
}

/// Buckets operator mints into periods of logical time and tracks the
/// unfrozen investor value available to back future mints.
#[derive(Debug, Clone)]
pub struct PredictionAgent {
    alpha: f64,
    period_length: u64,
    demand: BTreeMap<u64, Money>,
    latest_period: Option<u64>,
    operators_watermark: Seq,
    investors_watermark: Seq,
    unfrozen: Money,
}

impl PredictionAgent {
    pub fn new(alpha: f64, period_length: u64) -> Result<Self, ForecastError> {
        SmoothingFactor::new(alpha)?;
        Ok(PredictionAgent {
            alpha,
            period_length: period_length.max(1),
            demand: BTreeMap::new(),
            latest_period: None,
            operators_watermark: Seq(0),
            investors_watermark: Seq(0),
            unfrozen: Money::ZERO,
        })
    }

    fn period(&self, ts: u64) -> u64 {
        ts / self.period_length
    }

    /// Demand side: operator-ledger events.
    pub fn ingest_operators<'a>(&mut self, events: impl IntoIterator<Item = &'a LedgerEvent>) {
        for ev in events {
            if ev.seq <= self.operators_watermark {
                continue;
            }
            self.operators_watermark = ev.seq;
            let p = self.period(ev.timestamp.0);
            self.latest_period = Some(self.latest_period.map_or(p, |q| q.max(p)));
            if let Op::OperatorMint { amount, .. } = &ev.op {
                let slot = self.demand.entry(p).or_default();
                *slot = slot.checked_add(*amount).unwrap_or(Money::from_cents(u64::MAX));
            }
        }
    }

    /// Supply side: investor-ledger events.
    pub fn ingest_investors<'a>(&mut self, events: impl IntoIterator<Item = &'a LedgerEvent>) {
        for ev in events {
            if ev.seq <= self.investors_watermark {
                continue;
            }
            self.investors_watermark = ev.seq;
            self.unfrozen = match &ev.op {
                Op::InvestorMint { amount, .. } | Op::Redeem { amount, .. } => self.unfrozen.checked_add(*amount),
                Op::OperatorMint { amount, .. } => self.unfrozen.checked_sub(*amount),
                _ => Some(self.unfrozen),
            }
            .unwrap_or(self.unfrozen);
        }
    }

    /// Per-period demand from the first mint's period through the latest
    /// observed period, zero-filled.
    pub fn history(&self) -> Vec<Money> {
        let (Some((&first, _)), Some(last)) = (self.demand.first_key_value(), self.latest_period) else {
            return Vec::new();
        };
        (first..=last).map(|p| self.demand.get(&p).copied().unwrap_or_default()).collect()
    }

    pub fn unfrozen_balance(&self) -> Money {
        self.unfrozen
    }

    pub fn forecast(&self, horizon: u64) -> Result<DemandForecast, ForecastError> {
        forecast_demand(&self.history(), horizon, self.alpha, self.period_length)
    }
}
