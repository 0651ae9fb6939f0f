//! Rule-based detection of over-claimed credits and suspicious token paths.
//!
//! | rule | fires when |
//! |------|-----------|
//! | F1 | a property's cumulative credit exceeds the per-property cap |
//! | F2 | a customer has claimed on more properties than allowed |
//! | F3 | redeemed value of a credit exceeds what its lineage can back: the root mint capped by the matured tax credit |
//! | F4 | an actor receives the same credit twice along one root-to-leaf path |
//!
//! Alerts carry the seq of the triggering event as `detected_at`, so the
//! alert set depends only on the journal prefix and not on how it was
//! batched. Events at or below the watermark are ignored on redelivery.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::event::{LedgerEvent, Op};
use crate::provenance::{NodeKind, ProvenanceIndex};
use crate::rules::ClaimPolicy;
use crate::types::{ActorId, CreditCode, Money, PropertyId, Seq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "F1_AMOUNT_EXCEEDED")]
    F1AmountExceeded,
    #[serde(rename = "F2_PROPERTY_COUNT")]
    F2PropertyCount,
    #[serde(rename = "F3_UNBACKED_REDEEM")]
    F3UnbackedRedeem,
    #[serde(rename = "F4_CUSTODY_CYCLE")]
    F4CustodyCycle,
}

impl RuleId {
    pub fn code(self) -> &'static str {
        match self {
            RuleId::F1AmountExceeded => "F1_AMOUNT_EXCEEDED",
            RuleId::F2PropertyCount => "F2_PROPERTY_COUNT",
            RuleId::F3UnbackedRedeem => "F3_UNBACKED_REDEEM",
            RuleId::F4CustodyCycle => "F4_CUSTODY_CYCLE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FraudAlert {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub subjects: Vec<ActorId>,
    pub evidence: Vec<Seq>,
    pub detected_at: Seq,
}

type AlertKey = (RuleId, Vec<ActorId>, Vec<Seq>);

#[derive(Debug, Clone, Default)]
struct PropertyClaims {
    total: Money,
    claims: Vec<(Seq, ActorId)>,
}

#[derive(Debug, Clone)]
struct MintRecord {
    seq: Seq,
    fi: ActorId,
    amount: Money,
}

#[derive(Debug, Clone)]
pub struct ControlAgent {
    policy: ClaimPolicy,
    watermark: Seq,
    provenance: ProvenanceIndex,
    properties: BTreeMap<PropertyId, PropertyClaims>,
    customer_properties: BTreeMap<ActorId, BTreeMap<PropertyId, Seq>>,
    credits: BTreeMap<CreditCode, (Seq, Money)>,
    mints: BTreeMap<CreditCode, MintRecord>,
    redeemed: BTreeMap<CreditCode, Money>,
    alerts: Vec<FraudAlert>,
    seen: BTreeSet<AlertKey>,
}

fn sorted_unique<T: Ord>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    items.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

impl ControlAgent {
    pub fn new(policy: ClaimPolicy) -> Self {
        ControlAgent {
            policy,
            watermark: Seq(0),
            provenance: ProvenanceIndex::new(),
            properties: BTreeMap::new(),
            customer_properties: BTreeMap::new(),
            credits: BTreeMap::new(),
            mints: BTreeMap::new(),
            redeemed: BTreeMap::new(),
            alerts: Vec::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn watermark(&self) -> Seq {
        self.watermark
    }

    pub fn alerts(&self) -> &[FraudAlert] {
        &self.alerts
    }

    /// Alerts detected strictly after `seq`.
    pub fn alerts_since(&self, seq: Seq) -> impl Iterator<Item = &FraudAlert> {
        self.alerts.iter().filter(move |a| a.detected_at > seq)
    }

    /// Processes a batch and returns the alerts it raised.
    pub fn ingest<'a>(&mut self, events: impl IntoIterator<Item = &'a LedgerEvent>) -> Vec<FraudAlert> {
        let before = self.alerts.len();
        for ev in events {
            if ev.seq <= self.watermark {
                continue;
            }
            self.watermark = ev.seq;
            self.scan_event(ev);
        }
        self.alerts[before..].to_vec()
    }

    fn raise(&mut self, rule_id: RuleId, severity: Severity, subjects: Vec<ActorId>, evidence: Vec<Seq>, at: Seq) {
        if self.seen.insert((rule_id, subjects.clone(), evidence.clone())) {
            self.alerts.push(FraudAlert { rule_id, severity, subjects, evidence, detected_at: at });
        }
    }

    fn scan_event(&mut self, ev: &LedgerEvent) {
        let created = self.provenance.apply(ev);
        match &ev.op {
            Op::CreditClaim(credit) => {
                self.credits.insert(credit.credit_code.clone(), (ev.seq, credit.credit_amount));

                let entry = self.properties.entry(credit.property.clone()).or_default();
                entry.total = entry.total.checked_add(credit.credit_amount).unwrap_or(Money::from_cents(u64::MAX));
                entry.claims.push((ev.seq, credit.customer.clone()));
                if entry.total > self.policy.max_credit_per_property {
                    let subjects = sorted_unique(entry.claims.iter().map(|(_, c)| c.clone()));
                    let evidence = entry.claims.iter().map(|(s, _)| *s).collect();
                    self.raise(RuleId::F1AmountExceeded, Severity::Critical, subjects, evidence, ev.seq);
                }

                let props = self.customer_properties.entry(credit.customer.clone()).or_default();
                if !props.contains_key(&credit.property) {
                    props.insert(credit.property.clone(), ev.seq);
                    if props.len() as u64 > self.policy.max_properties_per_customer {
                        let evidence = sorted_unique(props.values().copied());
                        let subjects = vec![credit.customer.clone()];
                        self.raise(RuleId::F2PropertyCount, Severity::Critical, subjects, evidence, ev.seq);
                    }
                }
            }
            Op::OperatorMint { fi, amount, credit_code, .. } => {
                self.mints.insert(credit_code.clone(), MintRecord { seq: ev.seq, fi: fi.clone(), amount: *amount });
            }
            Op::Transfer { .. } => {
                if let Some((code, node)) = created {
                    self.check_custody_cycle(&code, node, ev.seq);
                }
            }
            Op::Redeem { holder, amount, .. } => {
                if let Some((code, _)) = created {
                    self.check_backing(&code, holder, *amount, ev.seq);
                }
            }
            Op::Register { .. } | Op::InvestorMint { .. } | Op::FundClose { .. } => {}
        }
    }

    fn check_custody_cycle(&mut self, code: &CreditCode, node: crate::provenance::NodeId, at: Seq) {
        let Some(tree) = self.provenance.tree(code) else { return };
        let Ok(path) = tree.trace_to_root(node) else { return };
        let (last, earlier) = path.split_last().expect("path contains the node itself");
        let repeat = earlier
            .iter()
            .rposition(|n| n.kind != NodeKind::Redeem && n.actor_to == last.actor_to);
        if let Some(start) = repeat {
            let evidence = path[start..].iter().map(|n| n.event_seq).collect();
            let subjects = vec![last.actor_to.clone()];
            self.raise(RuleId::F4CustodyCycle, Severity::Warning, subjects, evidence, at);
        }
    }

    fn check_backing(&mut self, code: &CreditCode, holder: &ActorId, amount: Money, at: Seq) {
        let redeemed = self.redeemed.entry(code.clone()).or_default();
        *redeemed = redeemed.checked_add(amount).unwrap_or(Money::from_cents(u64::MAX));
        let redeemed = *redeemed;
        let Some(mint) = self.mints.get(code) else { return };
        let claim = self.credits.get(code);
        let backing = claim.map_or(Money::ZERO, |&(_, credit)| credit).min(mint.amount);
        if redeemed > backing {
            let mut evidence: Vec<Seq> = claim.map(|&(s, _)| s).into_iter().collect();
            evidence.extend([mint.seq, at]);
            let subjects = sorted_unique([mint.fi.clone(), holder.clone()]);
            self.raise(RuleId::F3UnbackedRedeem, Severity::Critical, subjects, sorted_unique(evidence), at);
        }
    }
}

/// Scans a journal prefix from scratch.
pub fn control_scan<'a>(events: impl IntoIterator<Item = &'a LedgerEvent>, policy: &ClaimPolicy) -> Vec<FraudAlert> {
    let mut agent = ControlAgent::new(*policy);
    agent.ingest(events);
    agent.alerts
}
