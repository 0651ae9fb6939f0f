//! Scripted scenarios: an ordered list of API calls with expected outcomes.
//!
//! ```toml
//! name = "example"
//!
//! [config]                  # optional, same keys as the service config
//! claim_validation = false
//!
//! [[steps]]
//! op = "mint_operator"      # remaining keys form the request
//! fi = "bank1"
//! to = "gc1"
//! amount = 40000
//! credit_code = "C1"
//! at = 12                   # optional logical timestamp
//! expect = { "op.batch_id" = "B1" }
//!
//! [[steps]]
//! op = "redeem_operator"
//! holder = "gc1"
//! fi = "bank1"
//! batch_id = "B9"
//! amount = 1
//! expect_error = "UNKNOWN_BATCH"
//! ```
//!
//! `expect` keys are dotted paths into the JSON response. A numeric segment
//! indexes an array and `#` takes the length of an array or object. Numbers
//! and strings compare by their decimal text, so `amount = 5` matches `"5"`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use credito_gateway::ServiceConfig;
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::transport::{segment, Method, Transport, TransportError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("script parse error: {0}")]
    ScriptParse(String),
    #[error("expectation failed at step {step} ({op}): {reason}")]
    ExpectationFailed { step: usize, op: String, reason: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl ScenarioError {
    /// Process exit status for this outcome.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::ExpectationFailed { .. } => 1,
            ScenarioError::ScriptParse(_) => 2,
            ScenarioError::Transport(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub config: ServiceConfig,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Step {
    pub op: String,
    #[serde(default)]
    pub at: Option<u64>,
    #[serde(default)]
    pub expect_error: Option<String>,
    #[serde(default)]
    pub expect: BTreeMap<String, Value>,
    #[serde(flatten)]
    pub args: Map<String, Value>,
}

/// A resolved API call.
#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub method: Method,
    pub path: String,
    pub body: Option<Value>,
}

const COMMANDS: [(&str, &str); 7] = [
    ("register_actor", "/actors"),
    ("mint_investor", "/investor/mint"),
    ("mint_operator", "/operator/mint"),
    ("transfer_operator", "/operator/transfer"),
    ("redeem_operator", "/operator/redeem"),
    ("invoice_discount", "/credits/invoice-discount"),
    ("close_fund", "/fund/close"),
];

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

impl Step {
    fn arg(&self, key: &str) -> Result<String, String> {
        self.args.get(key).and_then(scalar_text).ok_or_else(|| format!("{} needs `{key}`", self.op))
    }

    fn only(&self, allowed: &[&str]) -> Result<(), String> {
        match self.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(format!("{} does not take `{k}`", self.op)),
            None => Ok(()),
        }
    }

    fn query(&self, key: &str) -> Result<String, String> {
        self.only(&[key])?;
        Ok(match self.args.get(key) {
            Some(v) => format!("?{key}={}", scalar_text(v).ok_or(format!("`{key}` must be a scalar"))?),
            None => String::new(),
        })
    }

    pub fn call(&self) -> Result<Call, String> {
        if let Some((_, path)) = COMMANDS.iter().find(|(name, _)| *name == self.op) {
            let mut body = self.args.clone();
            if let Some(at) = self.at {
                body.insert("at".into(), Value::from(at));
            }
            return Ok(Call { method: Method::Post, path: (*path).to_owned(), body: Some(Value::Object(body)) });
        }
        if self.at.is_some() {
            return Err(format!("{} is a query and takes no `at`", self.op));
        }
        let path = match self.op.as_str() {
            "balances" => {
                self.only(&["actor"])?;
                format!("/balances/{}", segment(&self.arg("actor")?))
            }
            "unfrozen_balance" => {
                self.only(&[])?;
                "/investor/unfrozen-balance".to_owned()
            }
            "tree" => {
                self.only(&["credit_code"])?;
                format!("/credits/{}/tree", segment(&self.arg("credit_code")?))
            }
            "alerts" => format!("/alerts{}", self.query("since_seq")?),
            "forecast" => format!("/forecast{}", self.query("horizon")?),
            "journal" => format!("/journal{}", self.query("from_seq")?),
            "healthz" => {
                self.only(&[])?;
                "/healthz".to_owned()
            }
            other => return Err(format!("unknown op `{other}`")),
        };
        Ok(Call { method: Method::Get, path, body: None })
    }
}

impl Script {
    pub fn parse(text: &str) -> Result<Script, ScenarioError> {
        let script: Script = toml::from_str(text).map_err(|e| ScenarioError::ScriptParse(e.to_string()))?;
        script.config.validate().map_err(|e| ScenarioError::ScriptParse(format!("config: {e}")))?;
        for (i, step) in script.steps.iter().enumerate() {
            step.call().map_err(|e| ScenarioError::ScriptParse(format!("step {}: {e}", i + 1)))?;
            if step.expect_error.is_some() && !step.expect.is_empty() {
                return Err(ScenarioError::ScriptParse(format!(
                    "step {}: expect and expect_error are exclusive",
                    i + 1
                )));
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Script, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::ScriptParse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The service configuration this script needs, kept in memory.
    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig { journal: None, ..self.config.clone() }
    }
}

/// Follows a dotted path through a JSON value.
pub fn lookup(value: &Value, path: &str) -> Option<Value> {
    let mut cur = value.clone();
    for seg in path.split('.') {
        cur = match (&cur, seg) {
            (Value::Array(a), "#") => Value::from(a.len()),
            (Value::Object(o), "#") => Value::from(o.len()),
            (Value::Array(a), idx) => a.get(idx.parse::<usize>().ok()?)?.clone(),
            (Value::Object(o), key) => o.get(key)?.clone(),
            _ => return None,
        };
    }
    Some(cur)
}

/// Structural equality where numbers and strings match by decimal text.
pub fn loose_eq(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Array(e), Value::Array(a)) => e.len() == a.len() && e.iter().zip(a).all(|(e, a)| loose_eq(e, a)),
        (Value::Object(e), Value::Object(a)) => {
            e.len() == a.len() && e.iter().all(|(k, v)| a.get(k).is_some_and(|av| loose_eq(v, av)))
        }
        (Value::Null, Value::Null) => true,
        (Value::Bool(e), Value::Bool(a)) => e == a,
        (Value::Bool(_), _) | (_, Value::Bool(_)) => false,
        _ => matches!((scalar_text(expected), scalar_text(actual)), (Some(e), Some(a)) if e == a),
    }
}

fn error_of(body: &Value) -> (String, String) {
    let code = body["error"]["code"].as_str().unwrap_or("UNKNOWN").to_owned();
    let message = body["error"]["message"].as_str().unwrap_or("").to_owned();
    (code, message)
}

fn summary(call: &Call, body: &Value) -> String {
    match call.method {
        Method::Post => format!("seq={}", scalar_text(&body["seq"]).unwrap_or_default()),
        Method::Get => {
            let c = serde_json::to_string(body).expect("json");
            if c.chars().count() > 96 {
                format!("{}...", c.chars().take(96).collect::<String>())
            } else {
                c
            }
        }
    }
}

/// Result of running a script: the transcript so far and the outcome.
#[derive(Debug)]
pub struct Run {
    pub transcript: String,
    pub outcome: Result<(), ScenarioError>,
}

impl Run {
    pub fn exit_code(&self) -> i32 {
        self.outcome.as_ref().map_or_else(ScenarioError::exit_code, |_| 0)
    }
}

/// Runs `script` step by step, stopping at the first divergence.
pub fn run(script: &Script, transport: &mut dyn Transport) -> Run {
    let mut transcript = String::new();
    let _ = writeln!(transcript, "scenario {}: {} steps", script.name, script.steps.len());
    let outcome = run_steps(script, transport, &mut transcript);
    match &outcome {
        Ok(()) => {
            let _ = writeln!(transcript, "PASS {}", script.name);
        }
        Err(e) => {
            let _ = writeln!(transcript, "FAIL {}: {e}", script.name);
        }
    }
    Run { transcript, outcome }
}

fn run_steps(script: &Script, transport: &mut dyn Transport, out: &mut String) -> Result<(), ScenarioError> {
    for (i, step) in script.steps.iter().enumerate() {
        let n = i + 1;
        let fail = |reason: String| ScenarioError::ExpectationFailed { step: n, op: step.op.clone(), reason };
        let call = step.call().map_err(ScenarioError::ScriptParse)?;
        let (status, body) = transport.call(call.method, &call.path, call.body.as_ref())?;
        let ok = (200..300).contains(&status);
        let _ = write!(out, "[{n:02}] {} {} -> {status}", call.method.as_str(), call.path);
        match (&step.expect_error, ok) {
            (Some(want), true) => {
                let _ = writeln!(out);
                return Err(fail(format!("expected error {want}, got success")));
            }
            (Some(want), false) => {
                let (code, message) = error_of(&body);
                let _ = writeln!(out, " {code}: {message}");
                if &code != want {
                    return Err(fail(format!("expected error {want}, got {code}: {message}")));
                }
            }
            (None, false) => {
                let (code, message) = error_of(&body);
                let _ = writeln!(out, " {code}: {message}");
                return Err(fail(format!("{code}: {message}")));
            }
            (None, true) => {
                let _ = writeln!(out, " {}", summary(&call, &body));
                for (path, want) in &step.expect {
                    match lookup(&body, path) {
                        Some(got) if loose_eq(want, &got) => {
                            let _ = writeln!(out, "     {path} == {want}");
                        }
                        got => {
                            let got = got.map_or_else(|| "<missing>".to_owned(), |g| g.to_string());
                            let _ = writeln!(out, "     {path}: expected {want}, got {got}");
                            return Err(fail(format!("{path}: expected {want}, got {got}")));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Checks that a remote server runs with the settings the script assumes.
pub fn check_remote(script: &Script, transport: &mut dyn Transport) -> Result<(), ScenarioError> {
    let (status, health) = transport.get("/healthz")?;
    let want = script.config.validate().map_err(|e| ScenarioError::ScriptParse(e.to_string()))?;
    let mismatch = |what: &str, want: String, got: &Value| ScenarioError::ExpectationFailed {
        step: 0,
        op: "healthz".into(),
        reason: format!("server {what} is {got}, script needs {want}"),
    };
    if status != 200 {
        return Err(mismatch("health", "200".into(), &Value::from(status)));
    }
    if health["claim_validation"] != Value::Bool(want.engine.claim_validation) {
        return Err(mismatch("claim_validation", want.engine.claim_validation.to_string(), &health["claim_validation"]));
    }
    let policy = serde_json::to_value(want.engine.policy).expect("json");
    if health["policy"] != policy {
        return Err(mismatch("policy", policy.to_string(), &health["policy"]));
    }
    let rate = serde_json::to_value(want.reward_rate).expect("json");
    if health["reward_rate"] != rate {
        return Err(mismatch("reward_rate", rate.to_string(), &health["reward_rate"]));
    }
    if health["head_seq"] != "0" {
        return Err(mismatch("journal head", "0 (fresh journal)".into(), &health["head_seq"]));
    }
    Ok(())
}
