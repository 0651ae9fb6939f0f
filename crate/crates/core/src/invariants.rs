//! Whole-state invariant checks, recomputed from raw tokens, batches and the
//! journal. Used by offline journal verification and by the fuzz suites.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::journal::Journal;
use crate::ledger::{Ledger, TokenState};
use crate::provenance::ProvenanceIndex;
use crate::types::{CreditCode, LinkId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(), String>) -> InvariantCheck {
    match result {
        Ok(()) => InvariantCheck { name, passed: true, detail: String::new() },
        Err(detail) => InvariantCheck { name, passed: false, detail },
    }
}

/// Live operator value equals frozen investor value, per link and globally.
pub fn coverage(ledger: &Ledger) -> Result<(), String> {
    let mut operator: BTreeMap<LinkId, u128> = BTreeMap::new();
    for b in ledger.batches() {
        *operator.entry(b.link_id).or_default() += u128::from(b.amount.cents());
    }
    let mut frozen: BTreeMap<LinkId, u128> = BTreeMap::new();
    for t in ledger.tokens() {
        if let TokenState::Frozen { link_id } = t.state {
            *frozen.entry(link_id).or_default() += u128::from(t.face_value.cents());
        }
    }
    if operator != frozen {
        let link = operator
            .keys()
            .chain(frozen.keys())
            .find(|l| operator.get(l) != frozen.get(l))
            .expect("maps differ");
        return Err(format!(
            "link {link}: operator {} vs frozen {}",
            operator.get(link).copied().unwrap_or(0),
            frozen.get(link).copied().unwrap_or(0)
        ));
    }
    let (op_total, fr_total): (u128, u128) = (operator.values().sum(), frozen.values().sum());
    if op_total != fr_total {
        return Err(format!("global operator {op_total} vs frozen {fr_total}"));
    }
    Ok(())
}

/// Investor value is never created or destroyed except by deposits.
pub fn investor_conservation(ledger: &Ledger) -> Result<(), String> {
    let total: u128 = ledger.tokens().map(|t| u128::from(t.face_value.cents())).sum();
    if total != u128::from(ledger.total_deposited().cents()) {
        return Err(format!("tokens sum to {total}, deposits {}", ledger.total_deposited().cents()));
    }
    Ok(())
}

/// No token or batch carries a zero amount; each batch's link belongs to its credit code.
pub fn positive_amounts(ledger: &Ledger) -> Result<(), String> {
    if let Some(t) = ledger.tokens().find(|t| t.face_value.is_zero()) {
        return Err(format!("token {} has zero face value", t.token_id));
    }
    if let Some(b) = ledger.batches().find(|b| b.amount.is_zero()) {
        return Err(format!("batch {} has zero amount", b.batch_id));
    }
    if let Some(b) = ledger.batches().find(|b| ledger.link_for_code(&b.credit_code) != Some(b.link_id)) {
        return Err(format!("batch {} link {} does not match credit {}", b.batch_id, b.link_id, b.credit_code));
    }
    Ok(())
}

/// Every derived tree conserves value, and its residue equals the live
/// batches of its credit code.
pub fn provenance(ledger: &Ledger, journal: &Journal) -> Result<(), String> {
    let mut index = ProvenanceIndex::new();
    for ev in journal.events() {
        index.apply(ev);
    }
    let mut live: BTreeMap<&CreditCode, u128> = BTreeMap::new();
    for b in ledger.batches() {
        *live.entry(&b.credit_code).or_default() += u128::from(b.amount.cents());
    }
    for tree in index.trees() {
        if let Err(nodes) = tree.check_conservation() {
            let ids: Vec<String> = nodes.iter().map(ToString::to_string).collect();
            return Err(format!("tree {} over-spends at {}", tree.credit_code(), ids.join(",")));
        }
        let expected = live.remove(tree.credit_code()).unwrap_or(0);
        if u128::from(tree.residue().cents()) != expected {
            return Err(format!(
                "tree {} residue {} vs live batches {expected}",
                tree.credit_code(),
                tree.residue().cents()
            ));
        }
    }
    if let Some((code, _)) = live.into_iter().next() {
        return Err(format!("live batches for {code} have no tree"));
    }
    Ok(())
}

pub fn check_all(ledger: &Ledger, journal: &Journal) -> Vec<InvariantCheck> {
    vec![
        outcome("coverage", coverage(ledger)),
        outcome("investor_conservation", investor_conservation(ledger)),
        outcome("positive_amounts", positive_amounts(ledger)),
        outcome("provenance_reconciliation", provenance(ledger, journal)),
    ]
}
