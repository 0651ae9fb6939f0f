//! Single-writer command path: prepare, validate, append durably, apply.

use std::path::Path;

use thiserror::Error;

use crate::event::{Command, LedgerEvent};
use crate::journal::{replay, Journal, JournalError, JournalRecord, Replayed};
use crate::ledger::{Ledger, LedgerError};
use crate::provenance::{build_tree, CreditTree, ProvenanceError};
use crate::rules::ClaimPolicy;
use crate::types::{CreditCode, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineSettings {
    pub policy: ClaimPolicy,
    /// When off, invoice discounts skip the claim caps (fraud demos only).
    pub claim_validation: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings { policy: ClaimPolicy::default(), claim_validation: true }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Ledger(e) => e.code(),
            EngineError::Journal(e) => e.code(),
        }
    }
}

#[derive(Debug)]
pub struct Engine {
    ledger: Ledger,
    journal: Journal,
    settings: EngineSettings,
}

impl Engine {
    pub fn in_memory(settings: EngineSettings) -> Self {
        Engine { ledger: Ledger::new(), journal: Journal::in_memory(), settings }
    }

    pub fn open(path: impl AsRef<Path>, settings: EngineSettings) -> Result<Self, JournalError> {
        Ok(Self::from_replayed(Journal::open(path)?, settings))
    }

    /// Replays serialized journal bytes into an in-memory engine.
    pub fn from_bytes(bytes: &[u8], settings: EngineSettings) -> Result<Self, JournalError> {
        Ok(Self::from_replayed(replay(bytes)?, settings))
    }

    pub fn from_replayed(replayed: Replayed, settings: EngineSettings) -> Self {
        Engine { ledger: replayed.ledger, journal: replayed.journal, settings }
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    /// Runs one command. Without a timestamp the logical clock advances by one.
    /// Nothing is applied unless the journal append succeeded.
    pub fn execute(&mut self, cmd: Command, timestamp: Option<Timestamp>) -> Result<&JournalRecord, EngineError> {
        let policy = self.settings.claim_validation.then_some(&self.settings.policy);
        let op = self.ledger.prepare(cmd, policy)?;
        let timestamp = timestamp.unwrap_or_else(|| Timestamp(self.ledger.last_timestamp().0.saturating_add(1)));
        let event = LedgerEvent {
            seq: crate::types::Seq(self.ledger.head().0 + 1),
            timestamp,
            actor: op.invoker().clone(),
            op,
        };
        self.ledger.validate(&event)?;
        self.journal.append(event)?;
        let record = self.journal.records().last().expect("just appended");
        self.ledger.commit(&record.event);
        Ok(record)
    }

    pub fn tree(&self, code: &CreditCode) -> Result<CreditTree, ProvenanceError> {
        build_tree(self.journal.events(), code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Role;
    use crate::types::{ActorId, Money, Seq};

    #[test]
    fn rejected_command_appends_nothing() {
        let mut e = Engine::in_memory(EngineSettings::default());
        e.execute(
            Command::RegisterActor { id: ActorId::new("gc1").unwrap(), roles: [Role::GeneralContractor].into() },
            None,
        )
        .unwrap();
        let err = e
            .execute(
                Command::MintInvestor {
                    fi: ActorId::new("gc1").unwrap(),
                    beneficiary: ActorId::new("gc1").unwrap(),
                    amount: Money::from_cents(1),
                },
                None,
            )
            .unwrap_err();
        assert_eq!(err.code(), "UNAUTHORIZED");
        assert_eq!(e.journal().head(), Seq(1));
        assert_eq!(e.ledger().head(), Seq(1));
    }

    #[test]
    fn default_clock_ticks() {
        let mut e = Engine::in_memory(EngineSettings::default());
        let r = e
            .execute(Command::RegisterActor { id: ActorId::new("a").unwrap(), roles: [Role::Investor].into() }, None)
            .unwrap();
        assert_eq!(r.event.timestamp, Timestamp(1));
        let r = e
            .execute(
                Command::RegisterActor { id: ActorId::new("b").unwrap(), roles: [Role::Investor].into() },
                Some(Timestamp(10)),
            )
            .unwrap();
        assert_eq!(r.event.timestamp, Timestamp(10));
    }
}
