//! Commands (caller intent) and events (what the journal records).
//!
//! A command carries only what the caller chooses. Preparing it against the
//! current ledger assigns every derived identifier, producing an [`Op`] that
//! replays to the same state without consulting anything but prior events.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rules::TaxCredit;
use crate::types::{ActorId, BatchId, CreditCode, LinkId, Money, PropertyId, Ratio, Seq, Timestamp, TokenId};

/// The eight participant roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Investor,
    FinancialInstitution,
    Customer,
    GeneralContractor,
    SubContractor,
    Supplier,
    DesignArchitect,
    TaxAuditor,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Investor,
        Role::FinancialInstitution,
        Role::Customer,
        Role::GeneralContractor,
        Role::SubContractor,
        Role::Supplier,
        Role::DesignArchitect,
        Role::TaxAuditor,
    ];

    /// Roles allowed to hold operator tokens.
    pub fn is_operator_group(self) -> bool {
        matches!(
            self,
            Role::GeneralContractor
                | Role::SubContractor
                | Role::Supplier
                | Role::DesignArchitect
                | Role::TaxAuditor
                | Role::FinancialInstitution
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Op {
    Register {
        actor: ActorId,
        roles: BTreeSet<Role>,
    },
    InvestorMint {
        fi: ActorId,
        beneficiary: ActorId,
        amount: Money,
        token_id: TokenId,
    },
    OperatorMint {
        fi: ActorId,
        to: ActorId,
        amount: Money,
        credit_code: CreditCode,
        link_id: LinkId,
        batch_id: BatchId,
    },
    Transfer {
        from: ActorId,
        to: ActorId,
        batch_id: BatchId,
        amount: Money,
        new_batch_id: BatchId,
    },
    Redeem {
        holder: ActorId,
        fi: ActorId,
        batch_id: BatchId,
        amount: Money,
    },
    FundClose {
        fi: ActorId,
        reward_rate: Ratio,
    },
    CreditClaim(TaxCredit),
}

impl Op {
    /// The actor on whose authority the op runs; recorded as the event actor.
    pub fn invoker(&self) -> &ActorId {
        match self {
            Op::Register { actor, .. } => actor,
            Op::InvestorMint { fi, .. } | Op::OperatorMint { fi, .. } | Op::FundClose { fi, .. } => fi,
            Op::Transfer { from, .. } => from,
            Op::Redeem { holder, .. } => holder,
            Op::CreditClaim(credit) => &credit.contractor,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Op::Register { .. } => "Register",
            Op::InvestorMint { .. } => "InvestorMint",
            Op::OperatorMint { .. } => "OperatorMint",
            Op::Transfer { .. } => "Transfer",
            Op::Redeem { .. } => "Redeem",
            Op::FundClose { .. } => "FundClose",
            Op::CreditClaim(_) => "CreditClaim",
        }
    }
}

/// One journal entry. State is the left fold of these from genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: Seq,
    pub timestamp: Timestamp,
    pub actor: ActorId,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    RegisterActor {
        id: ActorId,
        roles: BTreeSet<Role>,
    },
    MintInvestor {
        fi: ActorId,
        beneficiary: ActorId,
        amount: Money,
    },
    MintOperator {
        fi: ActorId,
        to: ActorId,
        amount: Money,
        credit_code: CreditCode,
    },
    TransferOperator {
        from: ActorId,
        to: ActorId,
        batch_id: BatchId,
        amount: Money,
    },
    RedeemOperator {
        holder: ActorId,
        fi: ActorId,
        batch_id: BatchId,
        amount: Money,
    },
    InvoiceDiscount {
        customer: ActorId,
        property: PropertyId,
        contractor: ActorId,
        invoice_total: Money,
        #[serde(with = "crate::types::dec_u64")]
        year: u64,
    },
    CloseFund {
        fi: ActorId,
        reward_rate: Ratio,
    },
}
