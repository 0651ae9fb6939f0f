//! Off-chain tracking of invoice-discount tax credits across two token
//! ledgers: an investors ledger of freezable deposit tokens and an operators
//! ledger of fungible tokens, each operator mint backed one-to-one by frozen
//! investor value and coupled to the tax credit it finances.
//!
//! Everything is event-sourced. [`engine::Engine`] is the single writer: it
//! turns a [`Command`] into a [`LedgerEvent`], appends it to the hash-chained
//! [`journal`], and folds it into the [`Ledger`]. Credit trees and agent
//! state are projections of the same journal.

pub mod agents;
pub mod engine;
pub mod event;
pub mod invariants;
pub mod journal;
pub mod ledger;
pub mod provenance;
pub mod rules;
pub mod sim;
pub mod types;

pub use engine::{Engine, EngineError, EngineSettings};
pub use event::{Command, LedgerEvent, Op, Role};
pub use ledger::{Ledger, LedgerError};
pub use types::{ActorId, BatchId, CreditCode, LinkId, Money, PropertyId, Ratio, Seq, Timestamp, TokenId};
