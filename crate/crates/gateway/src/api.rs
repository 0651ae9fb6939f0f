//! Endpoint handlers and the shared service state.
//!
//! Mutations take the engine write lock, append durably and return. Reads
//! take the read lock. Agents sit behind their own mutex and are caught up
//! from the journal on a timer and before every alert or forecast read.

use std::sync::{Arc, Mutex, PoisonError, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use credito_core::agents::AgentHost;
use credito_core::journal::JournalError;
use credito_core::ledger::LedgerError;
use credito_core::provenance::ProvenanceError;
use credito_core::{ActorId, Command, CreditCode, Engine, EngineError, Ratio, Seq, Timestamp};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::Validated;

/// Largest forecast horizon served, in periods.
pub const MAX_HORIZON: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub violations: Vec<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.to_owned(), message: message.into(), violations: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    pub fn body(&self) -> Value {
        let mut err = json!({ "code": self.code, "message": self.message });
        if !self.violations.is_empty() {
            err["violations"] = json!(self.violations);
        }
        json!({ "error": err })
    }
}

/// HTTP status for a ledger or journal error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "ZERO_AMOUNT" | "EMPTY_ROLE_SET" | "OVERFLOW" | "BAD_REQUEST" | "BAD_HORIZON" => StatusCode::BAD_REQUEST,
        "UNAUTHORIZED" | "NOT_OWNER" => StatusCode::FORBIDDEN,
        "UNKNOWN_BATCH" | "UNKNOWN_CREDIT_CODE" | "UNKNOWN_ACTOR" | "UNKNOWN_NODE" => StatusCode::NOT_FOUND,
        "DUPLICATE_ACTOR" | "DUPLICATE_CREDIT_CODE" | "INSUFFICIENT_COVERAGE" | "INSUFFICIENT_BATCH"
        | "OPEN_GUARANTEES" | "FUND_CLOSED" | "NON_MONOTONIC_TIME" | "SEQUENCE_CONFLICT" => StatusCode::CONFLICT,
        "CLAIM_REJECTED" => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let mut err = ApiError::new(status_for(e.code()), e.code(), e.to_string());
        if let EngineError::Ledger(LedgerError::ClaimRejected(v)) = &e {
            err.violations = v.iter().map(|v| v.code().to_owned()).collect();
        }
        if let EngineError::Journal(JournalError::StorageFailure(io)) = &e {
            tracing::error!(error = %io, "journal append failed");
        }
        err
    }
}

impl From<ProvenanceError> for ApiError {
    fn from(e: ProvenanceError) -> Self {
        ApiError::new(status_for(e.code()), e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

pub type ApiResult = Result<Json<Value>, ApiError>;

#[derive(Debug)]
pub struct Node {
    engine: RwLock<Engine>,
    agents: Mutex<AgentHost>,
    reward_rate: Ratio,
}

pub type Shared = Arc<Node>;

impl Node {
    pub fn new(engine: Engine, config: &Validated) -> Self {
        let agents = AgentHost::new(engine.settings().policy, config.alpha, config.period_length)
            .expect("alpha checked by config validation");
        let node = Node { engine: RwLock::new(engine), agents: Mutex::new(agents), reward_rate: config.reward_rate };
        node.tick_agents();
        node
    }

    /// Runs `f` against a consistent view of the engine.
    pub fn read<T>(&self, f: impl FnOnce(&Engine) -> T) -> T {
        f(&self.engine.read().unwrap_or_else(PoisonError::into_inner))
    }

    /// Feeds every journal record the agents have not seen yet.
    pub fn tick_agents(&self) {
        let engine = self.engine.read().unwrap_or_else(PoisonError::into_inner);
        self.agents.lock().unwrap_or_else(PoisonError::into_inner).tick(engine.journal());
    }

    fn with_agents<T>(&self, f: impl FnOnce(&Engine, &AgentHost) -> T) -> T {
        let engine = self.engine.read().unwrap_or_else(PoisonError::into_inner);
        let mut agents = self.agents.lock().unwrap_or_else(PoisonError::into_inner);
        agents.tick(engine.journal());
        f(&engine, &agents)
    }

    pub fn execute(&self, cmd: Command, at: Option<Timestamp>) -> ApiResult {
        let mut engine = self.engine.write().unwrap_or_else(PoisonError::into_inner);
        let record = engine.execute(cmd, at)?.clone();
        let mut body = json!({
            "seq": record.event.seq,
            "timestamp": record.event.timestamp,
            "hash": record.hash,
            "op": record.event.op,
        });
        if let Some(report) = engine.ledger().close_report() {
            if report.closed_at == record.event.seq {
                body["report"] = json!(report);
            }
        }
        Ok(Json(body))
    }
}

/// Parses a POST body into the command named by `tag`. An optional `at`
/// field sets the logical timestamp.
fn command_from(tag: &str, body: Value) -> Result<(Command, Option<Timestamp>), ApiError> {
    let Value::Object(mut fields) = body else {
        return Err(ApiError::bad_request("request body must be a JSON object"));
    };
    let at = match fields.remove("at") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v).map_err(|e| ApiError::bad_request(format!("at: {e}")))?),
    };
    fields.insert("command".into(), Value::String(tag.into()));
    let cmd = serde_json::from_value(Value::Object(fields)).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok((cmd, at))
}

fn body_of(payload: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Result<Value, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

type Payload = Result<Json<Value>, axum::extract::rejection::JsonRejection>;

macro_rules! command_route {
    ($name:ident, $tag:literal) => {
        async fn $name(State(node): State<Shared>, payload: Payload) -> ApiResult {
            let (cmd, at) = command_from($tag, body_of(payload)?)?;
            node.execute(cmd, at)
        }
    };
}

command_route!(register_actor, "register_actor");
command_route!(mint_investor, "mint_investor");
command_route!(mint_operator, "mint_operator");
command_route!(transfer_operator, "transfer_operator");
command_route!(redeem_operator, "redeem_operator");
command_route!(invoice_discount, "invoice_discount");

/// Fund close takes its reward rate from the service configuration.
async fn close_fund(State(node): State<Shared>, payload: Payload) -> ApiResult {
    let mut body = body_of(payload)?;
    if let Value::Object(fields) = &mut body {
        if fields.contains_key("reward_rate") {
            return Err(ApiError::bad_request("reward_rate is set by the service configuration"));
        }
        fields.insert("reward_rate".into(), json!(node.reward_rate));
    }
    let (cmd, at) = command_from("close_fund", body)?;
    node.execute(cmd, at)
}

/// The POST path and body that submit `cmd`. Fund close drops the reward
/// rate, which the server takes from its configuration.
pub fn endpoint_for(cmd: &Command, at: Option<Timestamp>) -> (&'static str, Value) {
    let path = match cmd {
        Command::RegisterActor { .. } => "/actors",
        Command::MintInvestor { .. } => "/investor/mint",
        Command::MintOperator { .. } => "/operator/mint",
        Command::TransferOperator { .. } => "/operator/transfer",
        Command::RedeemOperator { .. } => "/operator/redeem",
        Command::InvoiceDiscount { .. } => "/credits/invoice-discount",
        Command::CloseFund { .. } => "/fund/close",
    };
    let mut body = json!(cmd);
    let fields = body.as_object_mut().expect("commands serialize as objects");
    fields.remove("command");
    if matches!(cmd, Command::CloseFund { .. }) {
        fields.remove("reward_rate");
    }
    if let Some(at) = at {
        fields.insert("at".into(), json!(at));
    }
    (path, body)
}

async fn balances(State(node): State<Shared>, Path(actor): Path<String>) -> ApiResult {
    let actor: ActorId = actor.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
    node.read(|engine| {
        let ledger = engine.ledger();
        let roles = ledger
            .roles(&actor)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_ACTOR", format!("no actor {actor}")))?;
        let mut body = json!(ledger.balances(&actor));
        body["actor"] = json!(actor);
        body["roles"] = json!(roles);
        body["head_seq"] = json!(ledger.head());
        Ok(Json(body))
    })
}

async fn unfrozen_balance(State(node): State<Shared>) -> ApiResult {
    node.read(|engine| {
        let ledger = engine.ledger();
        Ok(Json(json!({
            "unfrozen": ledger.unfrozen_investor_balance(),
            "frozen": ledger.frozen_investor_balance(),
            "live_operator": ledger.live_operator_total(),
            "head_seq": ledger.head(),
        })))
    })
}

async fn credit_tree(State(node): State<Shared>, Path(code): Path<String>) -> ApiResult {
    let code: CreditCode = code.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
    let tree = node.read(|engine| engine.tree(&code))?;
    Ok(Json(json!(tree)))
}

#[derive(Debug, Deserialize)]
struct AlertsQuery {
    since_seq: Option<u64>,
}

/// Alerts detected strictly after `since_seq`, plus the cursor to pass next.
async fn alerts(State(node): State<Shared>, Query(q): Query<AlertsQuery>) -> ApiResult {
    let since = Seq(q.since_seq.unwrap_or(0));
    node.with_agents(|_, agents| {
        let list: Vec<_> = agents.control().alerts_since(since).cloned().collect();
        let seen = agents.subscriptions().iter().map(|s| s.last_processed_seq).min().unwrap_or_default();
        Ok(Json(json!({
            "alerts": list,
            "cursor": seen.max(since),
        })))
    })
}

#[derive(Debug, Deserialize)]
struct ForecastQuery {
    horizon: Option<u64>,
}

async fn forecast(State(node): State<Shared>, Query(q): Query<ForecastQuery>) -> ApiResult {
    let horizon = q.horizon.unwrap_or(1);
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "BAD_HORIZON",
            format!("horizon must be within 1..={MAX_HORIZON}"),
        ));
    }
    node.with_agents(|_, agents| {
        let prediction = agents.prediction();
        let history = prediction.history();
        let unfrozen = prediction.unfrozen_balance();
        let forecast = prediction.forecast(horizon).ok();
        let shortfall = forecast
            .as_ref()
            .and_then(|f| f.values.first())
            .map(|next| next.checked_sub(unfrozen).unwrap_or_default())
            .unwrap_or_default();
        Ok(Json(json!({
            "history": history,
            "forecast": forecast,
            "unfrozen_balance": unfrozen,
            "shortfall": shortfall,
        })))
    })
}

#[derive(Debug, Deserialize)]
struct JournalQuery {
    from_seq: Option<u64>,
}

/// Records with `seq >= from_seq`.
async fn journal(State(node): State<Shared>, Query(q): Query<JournalQuery>) -> ApiResult {
    let from = q.from_seq.unwrap_or(1).max(1);
    node.read(|engine| {
        let j = engine.journal();
        Ok(Json(json!({
            "records": j.after(Seq(from - 1)),
            "head_seq": j.head(),
            "head_hash": j.head_hash(),
        })))
    })
}

async fn healthz(State(node): State<Shared>) -> ApiResult {
    node.read(|engine| {
        Ok(Json(json!({
            "status": "ok",
            "head_seq": engine.journal().head(),
            "head_hash": engine.journal().head_hash(),
            "claim_validation": engine.settings().claim_validation,
            "policy": engine.settings().policy,
            "reward_rate": node.reward_rate,
            "closed": engine.ledger().is_closed(),
        })))
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such endpoint")
}

pub fn router(node: Shared) -> Router {
    Router::new()
        .route("/actors", post(register_actor))
        .route("/investor/mint", post(mint_investor))
        .route("/operator/mint", post(mint_operator))
        .route("/operator/transfer", post(transfer_operator))
        .route("/operator/redeem", post(redeem_operator))
        .route("/credits/invoice-discount", post(invoice_discount))
        .route("/fund/close", post(close_fund))
        .route("/balances/{actor}", get(balances))
        .route("/investor/unfrozen-balance", get(unfrozen_balance))
        .route("/credits/{code}/tree", get(credit_tree))
        .route("/alerts", get(alerts))
        .route("/forecast", get(forecast))
        .route("/journal", get(journal))
        .route("/healthz", get(healthz))
        .fallback(not_found)
        .with_state(node)
}
