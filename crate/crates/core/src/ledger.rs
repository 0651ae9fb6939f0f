//! The two-ledger state machine.
//!
//! Investor tokens are deposit-backed units that are either unfrozen or frozen
//! under a [`LinkId`]. Operator batches are fungible amounts, each coupled to
//! a link and a credit code. An operator mint burns unfrozen investor value,
//! re-mints the same value frozen under a fresh link, then creates the batch;
//! a redeem reverses the freeze for the redeemed amount. Live operator value
//! under a link always equals frozen investor value under that link.
//!
//! Every op is validated in full before any field is touched, so a rejected
//! op leaves the ledger bit-identical.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Command, LedgerEvent, Op, Role};
use crate::rules::{compute_deduction, ClaimPolicy, CreditRegistry, RulesError, TaxCredit, Violation};
use crate::types::{ActorId, BatchId, CreditCode, LinkId, Money, Ratio, Seq, Timestamp, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("actor {0} is already registered")]
    DuplicateActor(ActorId),
    #[error("an actor needs at least one role")]
    EmptyRoleSet,
    #[error("{actor} is not authorized: requires {required}")]
    Unauthorized { actor: ActorId, required: &'static str },
    #[error("amount must be greater than zero")]
    ZeroAmount,
    #[error("unfrozen investor balance {available} does not cover {requested}")]
    InsufficientCoverage { requested: Money, available: Money },
    #[error("credit code {0} already has operator tokens")]
    DuplicateCreditCode(CreditCode),
    #[error("batch {batch} is not owned by {actor}")]
    NotOwner { batch: BatchId, actor: ActorId },
    #[error("batch {batch} holds {available}, requested {requested}")]
    InsufficientBatch { batch: BatchId, requested: Money, available: Money },
    #[error("no live batch {0}")]
    UnknownBatch(BatchId),
    #[error("{live} operator batches are still live")]
    OpenGuarantees { live: usize },
    #[error("the fund is closed")]
    FundClosed,
    #[error("claim rejected: {}", .0.iter().map(|v| v.code()).collect::<Vec<_>>().join(", "))]
    ClaimRejected(Vec<Violation>),
    #[error("amount arithmetic would overflow")]
    Overflow,
    #[error("timestamp {got} precedes last timestamp {last}")]
    NonMonotonicTime { last: Timestamp, got: Timestamp },
    #[error("expected seq {expected}, got {got}")]
    SequenceGap { expected: Seq, got: Seq },
    #[error("event assigns {got}, ledger expects {expected}")]
    IdMismatch { expected: String, got: String },
    #[error("event actor {got} does not match op invoker {expected}")]
    ActorMismatch { expected: ActorId, got: ActorId },
    #[error("credit {0} does not match the deduction rules")]
    InconsistentCredit(CreditCode),
}

impl LedgerError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::DuplicateActor(_) => "DUPLICATE_ACTOR",
            LedgerError::EmptyRoleSet => "EMPTY_ROLE_SET",
            LedgerError::Unauthorized { .. } => "UNAUTHORIZED",
            LedgerError::ZeroAmount => "ZERO_AMOUNT",
            LedgerError::InsufficientCoverage { .. } => "INSUFFICIENT_COVERAGE",
            LedgerError::DuplicateCreditCode(_) => "DUPLICATE_CREDIT_CODE",
            LedgerError::NotOwner { .. } => "NOT_OWNER",
            LedgerError::InsufficientBatch { .. } => "INSUFFICIENT_BATCH",
            LedgerError::UnknownBatch(_) => "UNKNOWN_BATCH",
            LedgerError::OpenGuarantees { .. } => "OPEN_GUARANTEES",
            LedgerError::FundClosed => "FUND_CLOSED",
            LedgerError::ClaimRejected(_) => "CLAIM_REJECTED",
            LedgerError::Overflow => "OVERFLOW",
            LedgerError::NonMonotonicTime { .. } => "NON_MONOTONIC_TIME",
            LedgerError::SequenceGap { .. } => "SEQUENCE_GAP",
            LedgerError::IdMismatch { .. } => "ID_MISMATCH",
            LedgerError::ActorMismatch { .. } => "ACTOR_MISMATCH",
            LedgerError::InconsistentCredit(_) => "INCONSISTENT_CREDIT",
        }
    }
}

impl From<RulesError> for LedgerError {
    fn from(_: RulesError) -> Self {
        LedgerError::Overflow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum TokenState {
    Unfrozen,
    Frozen { link_id: LinkId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvestorToken {
    pub token_id: TokenId,
    pub owner: ActorId,
    pub face_value: Money,
    #[serde(flatten)]
    pub state: TokenState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorBatch {
    pub batch_id: BatchId,
    pub link_id: LinkId,
    pub credit_code: CreditCode,
    pub owner: ActorId,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvestorPayout {
    pub investor: ActorId,
    pub principal: Money,
    pub reward: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseReport {
    pub closed_at: Seq,
    pub reward_rate: Ratio,
    pub payouts: Vec<InvestorPayout>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorBalances {
    pub unfrozen: Money,
    pub frozen: Money,
    pub operator: Money,
    pub batches: Vec<OperatorBatch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    actors: BTreeMap<ActorId, BTreeSet<Role>>,
    tokens: BTreeMap<TokenId, InvestorToken>,
    batches: BTreeMap<BatchId, OperatorBatch>,
    minted_codes: BTreeMap<CreditCode, LinkId>,
    credits: CreditRegistry,
    next_token: u64,
    next_link: u64,
    next_batch: u64,
    next_credit: u64,
    total_deposited: Money,
    head: Seq,
    last_timestamp: Timestamp,
    closed: Option<CloseReport>,
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger {
            actors: BTreeMap::new(),
            tokens: BTreeMap::new(),
            batches: BTreeMap::new(),
            minted_codes: BTreeMap::new(),
            credits: CreditRegistry::default(),
            next_token: 1,
            next_link: 1,
            next_batch: 1,
            next_credit: 1,
            total_deposited: Money::ZERO,
            head: Seq(0),
            last_timestamp: Timestamp(0),
            closed: None,
        }
    }
}

fn require(cond: bool, err: impl FnOnce() -> LedgerError) -> Result<(), LedgerError> {
    if cond {
        Ok(())
    } else {
        Err(err())
    }
}

fn non_zero(amount: Money) -> Result<(), LedgerError> {
    require(!amount.is_zero(), || LedgerError::ZeroAmount)
}

fn expect_id<T: PartialEq + ToString>(expected: T, got: T) -> Result<(), LedgerError> {
    require(expected == got, || LedgerError::IdMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    })
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    // ---- queries ----

    pub fn head(&self) -> Seq {
        self.head
    }

    pub fn last_timestamp(&self) -> Timestamp {
        self.last_timestamp
    }

    pub fn roles(&self, actor: &ActorId) -> Option<&BTreeSet<Role>> {
        self.actors.get(actor)
    }

    pub fn actors(&self) -> impl Iterator<Item = (&ActorId, &BTreeSet<Role>)> {
        self.actors.iter()
    }

    pub fn has_role(&self, actor: &ActorId, role: Role) -> bool {
        self.actors.get(actor).is_some_and(|r| r.contains(&role))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &InvestorToken> {
        self.tokens.values()
    }

    pub fn batches(&self) -> impl Iterator<Item = &OperatorBatch> {
        self.batches.values()
    }

    pub fn batch(&self, id: BatchId) -> Option<&OperatorBatch> {
        self.batches.get(&id)
    }

    pub fn credits(&self) -> &CreditRegistry {
        &self.credits
    }

    /// Link created by the operator mint for `code`, if any.
    pub fn link_for_code(&self, code: &CreditCode) -> Option<LinkId> {
        self.minted_codes.get(code).copied()
    }

    pub fn minted_codes(&self) -> impl Iterator<Item = (&CreditCode, &LinkId)> {
        self.minted_codes.iter()
    }

    pub fn close_report(&self) -> Option<&CloseReport> {
        self.closed.as_ref()
    }

    pub fn is_closed(&self) -> bool {
        self.closed.is_some()
    }

    pub fn total_deposited(&self) -> Money {
        self.total_deposited
    }

    /// Σ face value of all unfrozen investor tokens.
    pub fn unfrozen_investor_balance(&self) -> Money {
        self.tokens
            .values()
            .filter(|t| t.state == TokenState::Unfrozen)
            .map(|t| t.face_value)
            .sum()
    }

    pub fn frozen_investor_balance(&self) -> Money {
        self.tokens
            .values()
            .filter(|t| matches!(t.state, TokenState::Frozen { .. }))
            .map(|t| t.face_value)
            .sum()
    }

    pub fn frozen_under(&self, link: LinkId) -> Money {
        self.tokens
            .values()
            .filter(|t| t.state == TokenState::Frozen { link_id: link })
            .map(|t| t.face_value)
            .sum()
    }

    pub fn live_operator_total(&self) -> Money {
        self.batches.values().map(|b| b.amount).sum()
    }

    pub fn balances(&self, actor: &ActorId) -> ActorBalances {
        let mut out = ActorBalances::default();
        for t in self.tokens.values().filter(|t| &t.owner == actor) {
            let slot = match t.state {
                TokenState::Unfrozen => &mut out.unfrozen,
                TokenState::Frozen { .. } => &mut out.frozen,
            };
            *slot = slot.checked_add(t.face_value).expect("bounded by total deposits");
        }
        out.batches = self.batches.values().filter(|b| &b.owner == actor).cloned().collect();
        out.operator = out.batches.iter().map(|b| b.amount).sum();
        out
    }

    // ---- command preparation ----

    fn fresh_credit_code(&self) -> CreditCode {
        (self.next_credit..)
            .map(|n| CreditCode::new(format!("C{n}")).expect("short id"))
            .find(|c| !self.credits.contains(c) && !self.minted_codes.contains_key(c))
            .expect("unbounded counter")
    }

    /// Turns caller intent into a fully determined op. With a policy, invoice
    /// discounts are checked against the claim caps; without one they are not.
    pub fn prepare(&self, cmd: Command, policy: Option<&ClaimPolicy>) -> Result<Op, LedgerError> {
        Ok(match cmd {
            Command::RegisterActor { id, roles } => Op::Register { actor: id, roles },
            Command::MintInvestor { fi, beneficiary, amount } => Op::InvestorMint {
                fi,
                beneficiary,
                amount,
                token_id: TokenId(self.next_token),
            },
            Command::MintOperator { fi, to, amount, credit_code } => Op::OperatorMint {
                fi,
                to,
                amount,
                credit_code,
                link_id: LinkId(self.next_link),
                batch_id: BatchId(self.next_batch),
            },
            Command::TransferOperator { from, to, batch_id, amount } => Op::Transfer {
                from,
                to,
                batch_id,
                amount,
                new_batch_id: BatchId(self.next_batch),
            },
            Command::RedeemOperator { holder, fi, batch_id, amount } => {
                Op::Redeem { holder, fi, batch_id, amount }
            }
            Command::CloseFund { fi, reward_rate } => Op::FundClose { fi, reward_rate },
            Command::InvoiceDiscount { customer, property, contractor, invoice_total, year } => {
                // Role and amount checks come first so their errors win over caps.
                self.check_claim_parties(&customer, &contractor)?;
                non_zero(invoice_total)?;
                let deduction = compute_deduction(invoice_total)?;
                if let Some(policy) = policy {
                    self.credits
                        .validate_claim(&customer, &property, deduction.credit_amount, policy)
                        .map_err(LedgerError::ClaimRejected)?;
                }
                Op::CreditClaim(TaxCredit {
                    credit_code: self.fresh_credit_code(),
                    customer,
                    property,
                    contractor,
                    gross_spend: invoice_total,
                    credit_amount: deduction.credit_amount,
                    vintage_year: year,
                    instalments: deduction.instalments,
                })
            }
        })
    }

    /// Prepares, validates and applies a command as the next event.
    pub fn execute(
        &mut self,
        cmd: Command,
        timestamp: Timestamp,
        policy: Option<&ClaimPolicy>,
    ) -> Result<LedgerEvent, LedgerError> {
        let op = self.prepare(cmd, policy)?;
        let event = LedgerEvent { seq: Seq(self.head.0 + 1), timestamp, actor: op.invoker().clone(), op };
        self.apply(&event)?;
        Ok(event)
    }

    // ---- validation ----

    fn require_role(&self, actor: &ActorId, role: Role, label: &'static str) -> Result<(), LedgerError> {
        require(self.has_role(actor, role), || LedgerError::Unauthorized {
            actor: actor.clone(),
            required: label,
        })
    }

    fn check_claim_parties(&self, customer: &ActorId, contractor: &ActorId) -> Result<(), LedgerError> {
        self.require_role(customer, Role::Customer, "Customer")?;
        self.require_role(contractor, Role::GeneralContractor, "GeneralContractor")
    }

    fn owned_batch(&self, id: BatchId, owner: &ActorId, amount: Money) -> Result<&OperatorBatch, LedgerError> {
        let batch = self.batches.get(&id).ok_or(LedgerError::UnknownBatch(id))?;
        require(&batch.owner == owner, || LedgerError::NotOwner { batch: id, actor: owner.clone() })?;
        non_zero(amount)?;
        require(amount <= batch.amount, || LedgerError::InsufficientBatch {
            batch: id,
            requested: amount,
            available: batch.amount,
        })?;
        Ok(batch)
    }

    /// Checks that `event` can be applied next. Never mutates.
    pub fn validate(&self, event: &LedgerEvent) -> Result<(), LedgerError> {
        let expected_seq = Seq(self.head.0 + 1);
        require(event.seq == expected_seq, || LedgerError::SequenceGap {
            expected: expected_seq,
            got: event.seq,
        })?;
        require(event.timestamp >= self.last_timestamp, || LedgerError::NonMonotonicTime {
            last: self.last_timestamp,
            got: event.timestamp,
        })?;
        let invoker = event.op.invoker();
        require(&event.actor == invoker, || LedgerError::ActorMismatch {
            expected: invoker.clone(),
            got: event.actor.clone(),
        })?;
        require(self.closed.is_none(), || LedgerError::FundClosed)?;

        match &event.op {
            Op::Register { actor, roles } => {
                require(!self.actors.contains_key(actor), || LedgerError::DuplicateActor(actor.clone()))?;
                require(!roles.is_empty(), || LedgerError::EmptyRoleSet)
            }
            Op::InvestorMint { fi, beneficiary, amount, token_id } => {
                self.require_role(fi, Role::FinancialInstitution, "FinancialInstitution")?;
                require(
                    self.has_role(beneficiary, Role::Investor)
                        || self.has_role(beneficiary, Role::FinancialInstitution),
                    || LedgerError::Unauthorized {
                        actor: beneficiary.clone(),
                        required: "Investor or FinancialInstitution",
                    },
                )?;
                non_zero(*amount)?;
                self.total_deposited.checked_add(*amount).ok_or(LedgerError::Overflow)?;
                expect_id(TokenId(self.next_token), *token_id)
            }
            Op::OperatorMint { fi, to, amount, credit_code, link_id, batch_id } => {
                self.require_role(fi, Role::FinancialInstitution, "FinancialInstitution")?;
                self.require_role(to, Role::GeneralContractor, "GeneralContractor")?;
                non_zero(*amount)?;
                let available = self.unfrozen_investor_balance();
                require(available >= *amount, || LedgerError::InsufficientCoverage {
                    requested: *amount,
                    available,
                })?;
                require(!self.minted_codes.contains_key(credit_code), || {
                    LedgerError::DuplicateCreditCode(credit_code.clone())
                })?;
                expect_id(LinkId(self.next_link), *link_id)?;
                expect_id(BatchId(self.next_batch), *batch_id)
            }
            Op::Transfer { from, to, batch_id, amount, new_batch_id } => {
                self.owned_batch(*batch_id, from, *amount)?;
                let to_ok = self
                    .actors
                    .get(to)
                    .is_some_and(|roles| roles.iter().any(|r| r.is_operator_group()));
                require(to_ok, || LedgerError::Unauthorized {
                    actor: to.clone(),
                    required: "an operator-group role",
                })?;
                expect_id(BatchId(self.next_batch), *new_batch_id)
            }
            Op::Redeem { holder, fi, batch_id, amount } => {
                self.require_role(fi, Role::FinancialInstitution, "FinancialInstitution")?;
                self.owned_batch(*batch_id, holder, *amount).map(|_| ())
            }
            Op::FundClose { fi, reward_rate } => {
                self.require_role(fi, Role::FinancialInstitution, "FinancialInstitution")?;
                require(self.batches.is_empty(), || LedgerError::OpenGuarantees { live: self.batches.len() })?;
                // Every principal is bounded by total deposits.
                reward_rate.apply_floor(self.total_deposited).ok_or(LedgerError::Overflow).map(|_| ())
            }
            Op::CreditClaim(credit) => {
                self.check_claim_parties(&credit.customer, &credit.contractor)?;
                non_zero(credit.gross_spend)?;
                let deduction = compute_deduction(credit.gross_spend)?;
                require(
                    deduction.credit_amount == credit.credit_amount
                        && deduction.instalments == credit.instalments,
                    || LedgerError::InconsistentCredit(credit.credit_code.clone()),
                )?;
                require(!self.credits.contains(&credit.credit_code), || LedgerError::IdMismatch {
                    expected: "a fresh credit code".into(),
                    got: credit.credit_code.to_string(),
                })?;
                self.credits
                    .property_total(&credit.property)
                    .checked_add(credit.credit_amount)
                    .ok_or(LedgerError::Overflow)
                    .map(|_| ())
            }
        }
    }

    // ---- application ----

    /// Validates and applies one event. On error the ledger is untouched.
    pub fn apply(&mut self, event: &LedgerEvent) -> Result<(), LedgerError> {
        self.validate(event)?;
        self.commit(event);
        Ok(())
    }

    /// Applies an event that has already passed [`Ledger::validate`].
    pub(crate) fn commit(&mut self, event: &LedgerEvent) {
        match &event.op {
            Op::Register { actor, roles } => {
                self.actors.insert(actor.clone(), roles.clone());
            }
            Op::InvestorMint { beneficiary, amount, .. } => {
                self.total_deposited = self.total_deposited.checked_add(*amount).expect("validated");
                self.mint_token(beneficiary.clone(), *amount, TokenState::Unfrozen);
            }
            Op::OperatorMint { to, amount, credit_code, .. } => {
                let link_id = LinkId(self.next_link);
                self.next_link += 1;
                self.freeze(*amount, link_id);
                self.minted_codes.insert(credit_code.clone(), link_id);
                self.mint_batch(link_id, credit_code.clone(), to.clone(), *amount);
            }
            Op::Transfer { to, batch_id, amount, .. } => {
                let source = self.debit_batch(*batch_id, *amount);
                self.mint_batch(source.link_id, source.credit_code, to.clone(), *amount);
            }
            Op::Redeem { batch_id, amount, .. } => {
                let source = self.debit_batch(*batch_id, *amount);
                self.unfreeze(*amount, source.link_id);
            }
            Op::FundClose { reward_rate, .. } => {
                let mut principal: BTreeMap<&ActorId, Money> = BTreeMap::new();
                for t in self.tokens.values() {
                    let p = principal.entry(&t.owner).or_default();
                    *p = p.checked_add(t.face_value).expect("bounded by total deposits");
                }
                let payouts = principal
                    .into_iter()
                    .map(|(investor, principal)| InvestorPayout {
                        investor: investor.clone(),
                        principal,
                        reward: reward_rate.apply_floor(principal).expect("validated"),
                    })
                    .collect();
                self.closed = Some(CloseReport { closed_at: event.seq, reward_rate: *reward_rate, payouts });
            }
            Op::CreditClaim(credit) => {
                self.next_credit += 1;
                self.credits.insert(credit.clone());
            }
        }
        self.head = event.seq;
        self.last_timestamp = event.timestamp;
    }

    fn mint_token(&mut self, owner: ActorId, face_value: Money, state: TokenState) -> TokenId {
        let token_id = TokenId(self.next_token);
        self.next_token += 1;
        self.tokens.insert(token_id, InvestorToken { token_id, owner, face_value, state });
        token_id
    }

    fn mint_batch(&mut self, link_id: LinkId, credit_code: CreditCode, owner: ActorId, amount: Money) {
        let batch_id = BatchId(self.next_batch);
        self.next_batch += 1;
        self.batches.insert(batch_id, OperatorBatch { batch_id, link_id, credit_code, owner, amount });
    }

    /// Reduces a batch, removing it at zero. Returns the batch as it was.
    fn debit_batch(&mut self, id: BatchId, amount: Money) -> OperatorBatch {
        let batch = self.batches.get_mut(&id).expect("validated");
        let before = batch.clone();
        batch.amount = batch.amount.checked_sub(amount).expect("validated");
        if batch.amount.is_zero() {
            self.batches.remove(&id);
        }
        before
    }

    /// Burns tokens in `from` state oldest-first until `amount` is covered and
    /// re-mints the same value in `to` state with the same owners. A partially
    /// consumed token leaves a remainder token in `from` state.
    fn convert(&mut self, amount: Money, from: TokenState, to: TokenState) {
        let mut remaining = amount;
        let sources: Vec<TokenId> = self
            .tokens
            .values()
            .filter(|t| t.state == from)
            .map(|t| t.token_id)
            .collect();
        for id in sources {
            if remaining.is_zero() {
                break;
            }
            let token = self.tokens.remove(&id).expect("listed above");
            let take = token.face_value.min(remaining);
            remaining = remaining.checked_sub(take).expect("take <= remaining");
            self.mint_token(token.owner.clone(), take, to);
            let rest = token.face_value.checked_sub(take).expect("take <= face value");
            if !rest.is_zero() {
                self.mint_token(token.owner, rest, from);
            }
        }
        debug_assert!(remaining.is_zero(), "validated coverage");
    }

    fn freeze(&mut self, amount: Money, link_id: LinkId) {
        self.convert(amount, TokenState::Unfrozen, TokenState::Frozen { link_id });
    }

    fn unfreeze(&mut self, amount: Money, link_id: LinkId) {
        self.convert(amount, TokenState::Frozen { link_id }, TokenState::Unfrozen);
    }
}
