//! Client-side tooling for the credito gateway: scenario runner, offline
//! journal verification and text renderings.

pub mod scenario;
pub mod transport;

use std::fmt::Write as _;

use credito_core::invariants::{check_all, InvariantCheck};
use credito_core::journal::{replay, JournalError};
use credito_core::provenance::CreditTree;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub records: usize,
    pub head_hash: String,
    pub checks: Vec<InvariantCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!("chain: PASS ({} records, head {})\n", self.records, self.head_hash);
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = write!(out, "{}: {verdict}", c.name);
            if !c.detail.is_empty() {
                let _ = write!(out, " ({})", c.detail);
            }
            out.push('\n');
        }
        out
    }
}

/// Checks the hash chain, replays every record through the ledger and runs
/// every whole-state invariant.
pub fn verify_journal(bytes: &[u8]) -> Result<VerifyReport, JournalError> {
    let replayed = replay(bytes)?;
    Ok(VerifyReport {
        records: replayed.journal.len(),
        head_hash: replayed.journal.head_hash().to_string(),
        checks: check_all(&replayed.ledger, &replayed.journal),
    })
}

/// Renders a tree as returned by `GET /credits/{code}/tree`.
pub fn render_tree(body: &Value) -> Result<String, serde_json::Error> {
    let tree: CreditTree = serde_json::from_value(body.clone())?;
    Ok(tree.render())
}

/// Renders a `GET /forecast` response.
pub fn render_forecast(body: &Value) -> String {
    let cents = |v: &Value| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string());
    let history: Vec<String> = body["history"].as_array().into_iter().flatten().map(cents).collect();
    let mut out = format!("history: [{}]\n", history.join(", "));
    match body["forecast"].as_object() {
        Some(f) => {
            let values: Vec<String> = f["values"].as_array().into_iter().flatten().map(cents).collect();
            let _ = writeln!(out, "method: {}", f["method"].as_str().unwrap_or(""));
            let _ = writeln!(out, "forecast: [{}]", values.join(", "));
        }
        None => out.push_str("forecast: none (no operator mints yet)\n"),
    }
    let _ = writeln!(out, "unfrozen balance: {}", cents(&body["unfrozen_balance"]));
    let _ = writeln!(out, "shortfall: {}", cents(&body["shortfall"]));
    out
}

/// Renders a `GET /alerts` response, one alert per line.
pub fn render_alerts(body: &Value) -> String {
    let mut out = String::new();
    for a in body["alerts"].as_array().into_iter().flatten() {
        let list = |v: &Value| {
            v.as_array().into_iter().flatten().filter_map(Value::as_str).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(
            out,
            "{} {} subjects=[{}] evidence=[{}] at={}",
            a["severity"].as_str().unwrap_or(""),
            a["rule_id"].as_str().unwrap_or(""),
            list(&a["subjects"]),
            list(&a["evidence"]),
            a["detected_at"].as_str().unwrap_or("")
        );
    }
    let _ = writeln!(out, "cursor: {}", body["cursor"].as_str().unwrap_or("0"));
    out
}
