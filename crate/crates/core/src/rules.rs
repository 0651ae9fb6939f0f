//! Fiscal rules for the invoice-discount path: the 110% deduction, its five
//! annual instalments, and claim caps per property and per customer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActorId, CreditCode, Money, PropertyId};

/// Deduction matured per 100 of spend.
pub const DEDUCTION_PERCENT: u64 = 110;
/// Number of equal annual instalments the deduction is split into.
pub const INSTALMENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RulesError {
    #[error("deduction for {0} does not fit in a money value")]
    Overflow(Money),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deduction {
    pub credit_amount: Money,
    pub instalments: [Money; INSTALMENTS],
}

/// `floor(spend × 110 / 100)`, split into five parts. Remainder cents go to
/// the earliest instalments so the parts differ by at most one cent.
pub fn compute_deduction(gross_spend: Money) -> Result<Deduction, RulesError> {
    let scaled = u128::from(gross_spend.cents()) * u128::from(DEDUCTION_PERCENT) / 100;
    let credit = u64::try_from(scaled).map_err(|_| RulesError::Overflow(gross_spend))?;
    let n = INSTALMENTS as u64;
    let (base, rem) = (credit / n, credit % n);
    let instalments =
        std::array::from_fn(|i| Money::from_cents(base + u64::from((i as u64) < rem)));
    Ok(Deduction { credit_amount: Money::from_cents(credit), instalments })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxCredit {
    pub credit_code: CreditCode,
    pub customer: ActorId,
    pub property: PropertyId,
    pub contractor: ActorId,
    pub gross_spend: Money,
    pub credit_amount: Money,
    #[serde(with = "crate::types::dec_u64")]
    pub vintage_year: u64,
    pub instalments: [Money; INSTALMENTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimPolicy {
    pub max_credit_per_property: Money,
    #[serde(with = "crate::types::dec_u64")]
    pub max_properties_per_customer: u64,
}

impl ClaimPolicy {
    pub fn new(max_credit_per_property: Money, max_properties_per_customer: u64) -> Option<Self> {
        (!max_credit_per_property.is_zero() && max_properties_per_customer > 0)
            .then_some(ClaimPolicy { max_credit_per_property, max_properties_per_customer })
    }
}

impl Default for ClaimPolicy {
    /// Synthetic demo caps: €100 000 per property, two properties per customer.
    fn default() -> Self {
        ClaimPolicy {
            max_credit_per_property: Money::from_cents(10_000_000),
            max_properties_per_customer: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    AmountExceeded,
    PropertyCountExceeded,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::AmountExceeded => "AMOUNT_EXCEEDED",
            Violation::PropertyCountExceeded => "PROPERTY_COUNT_EXCEEDED",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Registry of matured tax credits, indexed for cap checks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreditRegistry {
    credits: BTreeMap<CreditCode, TaxCredit>,
    by_property: BTreeMap<PropertyId, Money>,
    by_customer: BTreeMap<ActorId, BTreeSet<PropertyId>>,
}

impl CreditRegistry {
    pub fn get(&self, code: &CreditCode) -> Option<&TaxCredit> {
        self.credits.get(code)
    }

    pub fn contains(&self, code: &CreditCode) -> bool {
        self.credits.contains_key(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaxCredit> {
        self.credits.values()
    }

    pub fn len(&self) -> usize {
        self.credits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.credits.is_empty()
    }

    pub fn property_total(&self, property: &PropertyId) -> Money {
        self.by_property.get(property).copied().unwrap_or_default()
    }

    pub fn customer_properties(&self, customer: &ActorId) -> usize {
        self.by_customer.get(customer).map_or(0, BTreeSet::len)
    }

    /// Caller must have checked that the code is fresh and the property
    /// total cannot overflow.
    pub(crate) fn insert(&mut self, credit: TaxCredit) {
        let total = self.by_property.entry(credit.property.clone()).or_default();
        *total = total.checked_add(credit.credit_amount).expect("property total checked");
        self.by_customer
            .entry(credit.customer.clone())
            .or_default()
            .insert(credit.property.clone());
        self.credits.insert(credit.credit_code.clone(), credit);
    }

    /// Pure cap check over the current registry; never mutates.
    pub fn validate_claim(
        &self,
        customer: &ActorId,
        property: &PropertyId,
        proposed_credit: Money,
        policy: &ClaimPolicy,
    ) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let over_cap = self
            .property_total(property)
            .checked_add(proposed_credit)
            .is_none_or(|total| total > policy.max_credit_per_property);
        if over_cap {
            violations.push(Violation::AmountExceeded);
        }
        let known = self.by_customer.get(customer).is_some_and(|p| p.contains(property));
        if !known && self.customer_properties(customer) as u64 + 1 > policy.max_properties_per_customer {
            violations.push(Violation::PropertyCountExceeded);
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(c: u64) -> Money {
        Money::from_cents(c)
    }

    fn credit(code: &str, customer: &str, property: &str, amount: u64) -> TaxCredit {
        TaxCredit {
            credit_code: CreditCode::new(code).unwrap(),
            customer: ActorId::new(customer).unwrap(),
            property: PropertyId::new(property).unwrap(),
            contractor: ActorId::new("gc1").unwrap(),
            gross_spend: m(amount),
            credit_amount: m(amount),
            vintage_year: 2021,
            instalments: [m(0); 5],
        }
    }

    #[test]
    fn hundred_euros_gives_hundred_ten() {
        let d = compute_deduction(m(10_000)).unwrap();
        assert_eq!(d.credit_amount, m(11_000));
        assert_eq!(d.instalments, [m(2_200); 5]);
    }

    #[test]
    fn zero_spend() {
        let d = compute_deduction(Money::ZERO).unwrap();
        assert_eq!(d.credit_amount, Money::ZERO);
        assert_eq!(d.instalments, [Money::ZERO; 5]);
    }

    #[test]
    fn remainder_goes_to_earliest_instalments() {
        // 9_999 × 1.1 = 10_998.9 → 10_998; 10_998 = 5 × 2_199 + 3
        let d = compute_deduction(m(9_999)).unwrap();
        assert_eq!(d.credit_amount, m(10_998));
        assert_eq!(d.instalments, [m(2_200), m(2_200), m(2_200), m(2_199), m(2_199)]);
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(compute_deduction(m(u64::MAX)), Err(RulesError::Overflow(m(u64::MAX))));
        assert!(compute_deduction(m(u64::MAX / 110 * 100)).is_ok());
    }

    #[test]
    fn fresh_claim_under_cap_ok() {
        let reg = CreditRegistry::default();
        let policy = ClaimPolicy::default();
        let c = ActorId::new("cust1").unwrap();
        let p = PropertyId::new("P1").unwrap();
        assert_eq!(reg.validate_claim(&c, &p, m(10_000_000), &policy), Ok(()));
    }

    #[test]
    fn amount_cap_violation() {
        let mut reg = CreditRegistry::default();
        reg.insert(credit("C1", "cust1", "P1", 9_000_000));
        let c = ActorId::new("cust1").unwrap();
        let p = PropertyId::new("P1").unwrap();
        let r = reg.validate_claim(&c, &p, m(2_000_000), &ClaimPolicy::default());
        assert_eq!(r, Err(vec![Violation::AmountExceeded]));
        assert_eq!(reg.validate_claim(&c, &p, m(1_000_000), &ClaimPolicy::default()), Ok(()));
    }

    #[test]
    fn property_count_violation() {
        let mut reg = CreditRegistry::default();
        reg.insert(credit("C1", "cust1", "P1", 100));
        reg.insert(credit("C2", "cust1", "P2", 100));
        let c = ActorId::new("cust1").unwrap();
        let policy = ClaimPolicy::default();
        let third = PropertyId::new("P3").unwrap();
        assert_eq!(
            reg.validate_claim(&c, &third, m(100), &policy),
            Err(vec![Violation::PropertyCountExceeded])
        );
        // A further claim on an already-claimed property does not count again.
        let second = PropertyId::new("P2").unwrap();
        assert_eq!(reg.validate_claim(&c, &second, m(100), &policy), Ok(()));
    }

    #[test]
    fn policy_rejects_zero_caps() {
        assert!(ClaimPolicy::new(Money::ZERO, 2).is_none());
        assert!(ClaimPolicy::new(m(1), 0).is_none());
        assert!(ClaimPolicy::new(m(1), 1).is_some());
    }
}
