//! Seeded generator of operation sequences for fuzzing and demo journals.
//!
//! [`Sim::next_valid`] only emits commands whose preconditions hold on the
//! given ledger, including the claim caps and a mint never exceeding the
//! matured credit it is coupled to. [`Sim::next_invalid`] emits commands
//! that must be rejected.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{Command, Role};
use crate::ledger::Ledger;
use crate::rules::{compute_deduction, ClaimPolicy};
use crate::types::{ActorId, BatchId, CreditCode, Money, PropertyId, Ratio, Timestamp};

/// Number of actors per role in the default population (50 in total).
const POPULATION: [(Role, &str, usize); 8] = [
    (Role::FinancialInstitution, "bank", 5),
    (Role::Investor, "inv", 12),
    (Role::Customer, "cust", 10),
    (Role::GeneralContractor, "gc", 8),
    (Role::SubContractor, "sub", 6),
    (Role::Supplier, "sup", 5),
    (Role::DesignArchitect, "arch", 2),
    (Role::TaxAuditor, "aud", 2),
];

const MAX_DEPOSIT: u64 = 2_000_000;
const MAX_INVOICE: u64 = 400_000;

#[derive(Debug, Clone)]
pub struct Sim {
    rng: ChaCha8Rng,
    policy: ClaimPolicy,
    registrations: Vec<(ActorId, BTreeSet<Role>)>,
    clock: u64,
}

fn actor(s: String) -> ActorId {
    ActorId::new(s).expect("generated ids are short")
}

impl Sim {
    pub fn new(seed: u64, policy: ClaimPolicy) -> Self {
        let mut registrations = Vec::new();
        for (role, prefix, count) in POPULATION {
            for i in 1..=count {
                let mut roles = BTreeSet::from([role]);
                // A few dual-role actors, as banks and customers can be.
                if role == Role::FinancialInstitution && i == 1 {
                    roles.insert(Role::Investor);
                }
                if role == Role::GeneralContractor && i == 1 {
                    roles.insert(Role::Supplier);
                }
                registrations.push((actor(format!("{prefix}{i}")), roles));
            }
        }
        Sim { rng: ChaCha8Rng::seed_from_u64(seed), policy, registrations, clock: 0 }
    }

    pub fn actor_count(&self) -> usize {
        self.registrations.len()
    }

    pub fn registrations(&self) -> Vec<Command> {
        self.registrations
            .iter()
            .map(|(id, roles)| Command::RegisterActor { id: id.clone(), roles: roles.clone() })
            .collect()
    }

    /// Next logical timestamp; advances by 0..=2.
    pub fn tick(&mut self) -> Timestamp {
        self.clock += self.rng.random_range(0..=2);
        Timestamp(self.clock)
    }

    fn with_role(&self, ledger: &Ledger, pred: impl Fn(Role) -> bool) -> Vec<ActorId> {
        ledger
            .actors()
            .filter(|(_, roles)| roles.iter().any(|&r| pred(r)))
            .map(|(id, _)| id.clone())
            .collect()
    }

    fn pick(&mut self, from: &[ActorId]) -> Option<ActorId> {
        from.choose(&mut self.rng).cloned()
    }

    fn deposit(&mut self, ledger: &Ledger) -> Option<Command> {
        let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution))?;
        let beneficiary =
            self.pick(&self.with_role(ledger, |r| matches!(r, Role::Investor | Role::FinancialInstitution)))?;
        let amount = Money::from_cents(self.rng.random_range(1..=MAX_DEPOSIT));
        Some(Command::MintInvestor { fi, beneficiary, amount })
    }

    fn claim(&mut self, ledger: &Ledger) -> Option<Command> {
        let customer = self.pick(&self.with_role(ledger, |r| r == Role::Customer))?;
        let contractor = self.pick(&self.with_role(ledger, |r| r == Role::GeneralContractor))?;
        let slot = self.rng.random_range(1..=self.policy.max_properties_per_customer.min(3));
        let property = PropertyId::new(format!("{customer}-p{slot}")).expect("short id");
        let invoice_total = Money::from_cents(self.rng.random_range(1..=MAX_INVOICE));
        let credit = compute_deduction(invoice_total).ok()?.credit_amount;
        ledger.credits().validate_claim(&customer, &property, credit, &self.policy).ok()?;
        Some(Command::InvoiceDiscount { customer, property, contractor, invoice_total, year: 2021 })
    }

    fn mint(&mut self, ledger: &Ledger) -> Option<Command> {
        let unfrozen = ledger.unfrozen_investor_balance();
        if unfrozen.is_zero() {
            return None;
        }
        let open: Vec<_> = ledger.credits().iter().filter(|c| ledger.link_for_code(&c.credit_code).is_none()).collect();
        let credit = *open.choose(&mut self.rng)?;
        let cap = credit.credit_amount.min(unfrozen).cents();
        let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution))?;
        Some(Command::MintOperator {
            fi,
            to: credit.contractor.clone(),
            amount: Money::from_cents(self.rng.random_range(1..=cap)),
            credit_code: credit.credit_code.clone(),
        })
    }

    fn random_batch(&mut self, ledger: &Ledger) -> Option<(BatchId, ActorId, Money)> {
        let batches: Vec<_> = ledger.batches().collect();
        let b = batches.choose(&mut self.rng)?;
        Some((b.batch_id, b.owner.clone(), b.amount))
    }

    fn transfer(&mut self, ledger: &Ledger) -> Option<Command> {
        let (batch_id, from, held) = self.random_batch(ledger)?;
        let to = self.pick(&self.with_role(ledger, Role::is_operator_group))?;
        let amount = Money::from_cents(self.rng.random_range(1..=held.cents()));
        Some(Command::TransferOperator { from, to, batch_id, amount })
    }

    fn redeem(&mut self, ledger: &Ledger) -> Option<Command> {
        let (batch_id, holder, held) = self.random_batch(ledger)?;
        let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution))?;
        // Full redeems half of the time so batches drain.
        let amount = if self.rng.random_bool(0.5) { held } else { Money::from_cents(self.rng.random_range(1..=held.cents())) };
        Some(Command::RedeemOperator { holder, fi, batch_id, amount })
    }

    /// A command that satisfies every precondition on `ledger`.
    pub fn next_valid(&mut self, ledger: &Ledger) -> Command {
        loop {
            let roll = self.rng.random_range(0..100);
            let cmd = match roll {
                0..=14 => self.deposit(ledger),
                15..=34 => self.claim(ledger),
                35..=54 => self.mint(ledger),
                55..=79 => self.transfer(ledger),
                _ => self.redeem(ledger),
            };
            if let Some(cmd) = cmd {
                return cmd;
            }
            if let Some(cmd) = self.deposit(ledger) {
                return cmd;
            }
        }
    }

    /// An operator mint for more than the unfrozen investor balance.
    pub fn over_coverage_mint(&mut self, ledger: &Ledger) -> Option<Command> {
        let unfrozen = ledger.unfrozen_investor_balance().cents();
        let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution))?;
        let to = self.pick(&self.with_role(ledger, |r| r == Role::GeneralContractor))?;
        let excess = self.rng.random_range(1..=1_000_000);
        Some(Command::MintOperator {
            fi,
            to,
            amount: Money::from_cents(unfrozen.checked_add(excess)?),
            credit_code: CreditCode::new(format!("X{}", self.rng.random_range(0..u32::MAX))).expect("short"),
        })
    }

    /// A command that must be rejected on `ledger`.
    pub fn next_invalid(&mut self, ledger: &Ledger) -> Command {
        loop {
            let everyone: Vec<ActorId> = ledger.actors().map(|(id, _)| id.clone()).collect();
            let non_fi = self.with_role(ledger, |r| r != Role::FinancialInstitution);
            let non_fi: Vec<_> =
                non_fi.into_iter().filter(|a| !ledger.has_role(a, Role::FinancialInstitution)).collect();
            let cmd = match self.rng.random_range(0..9) {
                0 => self.over_coverage_mint(ledger),
                1 => {
                    let fi = self.pick(&non_fi);
                    let beneficiary = self.pick(&everyone);
                    fi.zip(beneficiary).map(|(fi, beneficiary)| Command::MintInvestor {
                        fi,
                        beneficiary,
                        amount: Money::from_cents(1),
                    })
                }
                2 => self.deposit(ledger).map(|c| match c {
                    Command::MintInvestor { fi, beneficiary, .. } => {
                        Command::MintInvestor { fi, beneficiary, amount: Money::ZERO }
                    }
                    other => other,
                }),
                3 => self.random_batch(ledger).and_then(|(batch_id, owner, held)| {
                    let to = self.pick(&self.with_role(ledger, Role::is_operator_group))?;
                    Some(Command::TransferOperator {
                        from: owner,
                        to,
                        batch_id,
                        amount: held.checked_add(Money::from_cents(1))?,
                    })
                }),
                4 => self.random_batch(ledger).and_then(|(batch_id, owner, held)| {
                    let other = self.pick(&everyone).filter(|a| *a != owner)?;
                    let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution))?;
                    Some(Command::RedeemOperator { holder: other, fi, batch_id, amount: held })
                }),
                5 => self.random_batch(ledger).and_then(|(batch_id, owner, _)| {
                    let fi = self.pick(&non_fi)?;
                    Some(Command::RedeemOperator { holder: owner, fi, batch_id, amount: Money::from_cents(1) })
                }),
                6 => self.pick(&everyone).map(|id| Command::RegisterActor { id, roles: [Role::Investor].into() }),
                7 => {
                    let code = ledger.minted_codes().next().map(|(c, _)| c.clone());
                    let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution));
                    let to = self.pick(&self.with_role(ledger, |r| r == Role::GeneralContractor));
                    match (code, fi, to) {
                        (Some(credit_code), Some(fi), Some(to)) if !ledger.unfrozen_investor_balance().is_zero() => {
                            Some(Command::MintOperator { fi, to, amount: Money::from_cents(1), credit_code })
                        }
                        _ => None,
                    }
                }
                _ => {
                    let fi = self.pick(&self.with_role(ledger, |r| r == Role::FinancialInstitution));
                    fi.filter(|_| ledger.batches().next().is_some())
                        .map(|fi| Command::CloseFund { fi, reward_rate: Ratio::ZERO })
                }
            };
            if let Some(cmd) = cmd {
                return cmd;
            }
        }
    }
}
