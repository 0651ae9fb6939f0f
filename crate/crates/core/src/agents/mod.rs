//! Advisory agents. Two com agents relay journal events per ledger view, the
//! control agent raises fraud alerts, and the prediction agent forecasts
//! operator-token demand. None of them ever writes to the ledger.

pub mod com;
pub mod control;
pub mod forecast;

pub use com::{com_poll, AgentSubscription, ComAgent, DaoView};
pub use control::{control_scan, ControlAgent, FraudAlert, RuleId, Severity};
pub use forecast::{forecast_demand, DemandForecast, ForecastError, PredictionAgent, SmoothingFactor};

use crate::journal::Journal;
use crate::rules::ClaimPolicy;

#[derive(Debug, Clone)]
pub struct AgentHost {
    investors_com: ComAgent,
    operators_com: ComAgent,
    control: ControlAgent,
    prediction: PredictionAgent,
}

impl AgentHost {
    pub fn new(policy: ClaimPolicy, alpha: f64, period_length: u64) -> Result<Self, ForecastError> {
        Ok(AgentHost {
            investors_com: ComAgent::new("com-investors", DaoView::Investors),
            operators_com: ComAgent::new("com-operators", DaoView::Operators),
            control: ControlAgent::new(policy),
            prediction: PredictionAgent::new(alpha, period_length)?,
        })
    }

    /// Pulls everything new from the journal through both com agents.
    pub fn tick(&mut self, journal: &Journal) {
        let operators = self.operators_com.poll(journal);
        self.control.ingest(&operators);
        self.prediction.ingest_operators(&operators);
        let investors = self.investors_com.poll(journal);
        self.prediction.ingest_investors(&investors);
    }

    pub fn control(&self) -> &ControlAgent {
        &self.control
    }

    pub fn prediction(&self) -> &PredictionAgent {
        &self.prediction
    }

    pub fn subscriptions(&self) -> [&AgentSubscription; 2] {
        [self.investors_com.subscription(), self.operators_com.subscription()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Command, LedgerEvent, Role};
    use crate::ledger::Ledger;
    use crate::types::{ActorId, BatchId, CreditCode, Money, Seq, Timestamp};

    fn a(s: &str) -> ActorId {
        ActorId::new(s).unwrap()
    }

    fn m(c: u64) -> Money {
        Money::from_cents(c)
    }

    struct Script {
        ledger: Ledger,
        journal: Journal,
    }

    impl Script {
        fn new() -> Self {
            let mut s = Script { ledger: Ledger::new(), journal: Journal::in_memory() };
            for (id, role) in [
                ("bank1", Role::FinancialInstitution),
                ("inv1", Role::Investor),
                ("gc1", Role::GeneralContractor),
                ("sup1", Role::Supplier),
                ("cust1", Role::Customer),
                ("cust2", Role::Customer),
            ] {
                s.run(Command::RegisterActor { id: a(id), roles: [role].into() });
            }
            s
        }

        fn run(&mut self, cmd: Command) -> LedgerEvent {
            let ts = Timestamp(self.ledger.last_timestamp().0 + 1);
            let ev = self.ledger.execute(cmd, ts, None).unwrap();
            self.journal.append(ev.clone()).unwrap();
            ev
        }

        fn claim(&mut self, customer: &str, property: &str, invoice: u64) -> LedgerEvent {
            self.run(Command::InvoiceDiscount {
                customer: a(customer),
                property: property.parse().unwrap(),
                contractor: a("gc1"),
                invoice_total: m(invoice),
                year: 2021,
            })
        }

        fn deposit(&mut self, amount: u64) {
            self.run(Command::MintInvestor { fi: a("bank1"), beneficiary: a("inv1"), amount: m(amount) });
        }

        fn mint(&mut self, code: &str, amount: u64) -> LedgerEvent {
            self.run(Command::MintOperator {
                fi: a("bank1"),
                to: a("gc1"),
                amount: m(amount),
                credit_code: CreditCode::new(code).unwrap(),
            })
        }

        fn transfer(&mut self, from: &str, to: &str, batch: u64, amount: u64) -> LedgerEvent {
            self.run(Command::TransferOperator { from: a(from), to: a(to), batch_id: BatchId(batch), amount: m(amount) })
        }

        fn redeem(&mut self, holder: &str, batch: u64, amount: u64) -> LedgerEvent {
            self.run(Command::RedeemOperator { holder: a(holder), fi: a("bank1"), batch_id: BatchId(batch), amount: m(amount) })
        }

        fn events(&self) -> Vec<LedgerEvent> {
            self.journal.events().cloned().collect()
        }
    }

    #[test]
    fn com_poll_watermarks() {
        let mut s = Script::new();
        s.deposit(1);
        let head = s.journal.head();
        assert_eq!(head, Seq(7));
        let sub = AgentSubscription::new("probe");
        let (batch, sub) = com_poll(&sub, &s.journal);
        assert_eq!(batch.len(), 7);
        assert_eq!(sub.last_processed_seq, head);
        let (batch, sub2) = com_poll(&sub, &s.journal);
        assert!(batch.is_empty());
        assert_eq!(sub2, sub);
        // A watermark past the head never moves backwards.
        let ahead = AgentSubscription { agent_name: "x".into(), last_processed_seq: Seq(99) };
        let (batch, after) = com_poll(&ahead, &s.journal);
        assert!(batch.is_empty());
        assert_eq!(after.last_processed_seq, Seq(99));
    }

    #[test]
    fn clean_flow_raises_nothing() {
        let mut s = Script::new();
        s.deposit(200_000);
        s.claim("cust1", "P1", 100_000);
        s.mint("C1", 100_000);
        s.transfer("gc1", "sup1", 1, 30_000);
        s.redeem("gc1", 1, 70_000);
        s.redeem("sup1", 2, 30_000);
        assert!(control_scan(&s.events(), &ClaimPolicy::default()).is_empty());
    }

    #[test]
    fn f1_names_customer_and_both_claims() {
        let mut s = Script::new();
        let c1 = s.claim("cust1", "P1", 8_181_819); // credit 9_000_000
        let c2 = s.claim("cust1", "P1", 1_818_182); // credit 2_000_000
        let alerts = control_scan(&s.events(), &ClaimPolicy::default());
        assert_eq!(
            alerts,
            vec![FraudAlert {
                rule_id: RuleId::F1AmountExceeded,
                severity: Severity::Critical,
                subjects: vec![a("cust1")],
                evidence: vec![c1.seq, c2.seq],
                detected_at: c2.seq,
            }]
        );
    }

    #[test]
    fn f2_on_third_property() {
        let mut s = Script::new();
        let p1 = s.claim("cust1", "P1", 100);
        s.claim("cust1", "P1", 100);
        let p2 = s.claim("cust1", "P2", 100);
        let p3 = s.claim("cust1", "P3", 100);
        s.claim("cust2", "P4", 100);
        let alerts = control_scan(&s.events(), &ClaimPolicy::default());
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].rule_id, RuleId::F2PropertyCount);
        assert_eq!(alerts[0].subjects, vec![a("cust1")]);
        assert_eq!(alerts[0].evidence, vec![p1.seq, p2.seq, p3.seq]);
    }

    #[test]
    fn f3_redeem_beyond_matured_credit() {
        let mut s = Script::new();
        s.deposit(1_000_000);
        let claim = s.claim("cust1", "P1", 100_000); // credit 110_000
        let mint = s.mint("C1", 500_000);
        s.redeem("gc1", 1, 100_000);
        let redeem = s.redeem("gc1", 1, 20_000);
        let alerts = control_scan(&s.events(), &ClaimPolicy::default());
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].rule_id, RuleId::F3UnbackedRedeem);
        assert_eq!(alerts[0].subjects, vec![a("bank1"), a("gc1")]);
        assert_eq!(alerts[0].evidence, vec![claim.seq, mint.seq, redeem.seq]);
    }

    #[test]
    fn f3_mint_without_any_claim() {
        let mut s = Script::new();
        s.deposit(1_000);
        let mint = s.mint("GHOST", 1_000);
        let redeem = s.redeem("gc1", 1, 1);
        let alerts = control_scan(&s.events(), &ClaimPolicy::default());
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].evidence, vec![mint.seq, redeem.seq]);
    }

    #[test]
    fn f4_custody_cycle() {
        let mut s = Script::new();
        s.deposit(10_000);
        s.claim("cust1", "P1", 10_000);
        let mint = s.mint("C1", 10_000);
        let t1 = s.transfer("gc1", "sup1", 1, 5_000);
        let t2 = s.transfer("sup1", "gc1", 2, 2_000);
        let alerts = control_scan(&s.events(), &ClaimPolicy::default());
        assert_eq!(
            alerts,
            vec![FraudAlert {
                rule_id: RuleId::F4CustodyCycle,
                severity: Severity::Warning,
                subjects: vec![a("gc1")],
                evidence: vec![mint.seq, t1.seq, t2.seq],
                detected_at: t2.seq,
            }]
        );
    }

    #[test]
    fn redelivery_and_batching_do_not_change_alerts() {
        let mut s = Script::new();
        s.claim("cust1", "P1", 8_181_819);
        s.claim("cust1", "P1", 1_818_182);
        s.deposit(10_000);
        s.mint("C2", 10_000);
        s.transfer("gc1", "sup1", 1, 5_000);
        s.transfer("sup1", "gc1", 2, 5_000);
        let events = s.events();
        let whole = control_scan(&events, &ClaimPolicy::default());
        assert_eq!(whole.len(), 2);

        for split in 0..=events.len() {
            let mut agent = ControlAgent::new(ClaimPolicy::default());
            agent.ingest(&events[..split]);
            agent.ingest(&events[..split]);
            agent.ingest(&events);
            agent.ingest(&events[..5]);
            assert_eq!(agent.alerts(), whole.as_slice(), "split at {split}");
        }
    }

    #[test]
    fn host_feeds_both_views() {
        let mut s = Script::new();
        s.deposit(100_000);
        s.claim("cust1", "P1", 10_000);
        s.mint("C1", 40_000);
        let mut host = AgentHost::new(ClaimPolicy::default(), 0.5, 1).unwrap();
        host.tick(&s.journal);
        host.tick(&s.journal);
        assert_eq!(host.prediction().unfrozen_balance(), s.ledger.unfrozen_investor_balance());
        assert_eq!(host.prediction().history(), vec![m(40_000)]);
        assert!(host.subscriptions().iter().all(|sub| sub.last_processed_seq == s.journal.head()));
        s.redeem("gc1", 1, 15_000);
        host.tick(&s.journal);
        assert_eq!(host.prediction().unfrozen_balance(), m(75_000));
        // One more period elapsed with no mint.
        assert_eq!(host.prediction().history(), vec![m(40_000), Money::ZERO]);
        assert_eq!(host.prediction().forecast(2).unwrap().values, vec![m(20_000), m(20_000)]);
    }
}
