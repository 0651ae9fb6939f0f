//! Watermark pollers bridging the journal to the other agents.

use serde::{Deserialize, Serialize};

use crate::event::{LedgerEvent, Op};
use crate::journal::Journal;
use crate::types::Seq;

/// Which ledger's events a com agent relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaoView {
    Investors,
    Operators,
}

impl DaoView {
    pub fn includes(self, op: &Op) -> bool {
        match self {
            DaoView::Investors => matches!(
                op,
                Op::Register { .. }
                    | Op::InvestorMint { .. }
                    | Op::OperatorMint { .. }
                    | Op::Redeem { .. }
                    | Op::FundClose { .. }
            ),
            DaoView::Operators => matches!(
                op,
                Op::Register { .. }
                    | Op::OperatorMint { .. }
                    | Op::Transfer { .. }
                    | Op::Redeem { .. }
                    | Op::CreditClaim(_)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSubscription {
    pub agent_name: String,
    pub last_processed_seq: Seq,
}

impl AgentSubscription {
    pub fn new(agent_name: impl Into<String>) -> Self {
        AgentSubscription { agent_name: agent_name.into(), last_processed_seq: Seq(0) }
    }
}

/// Events in `(watermark, head]` and the advanced subscription. A watermark
/// beyond the head is left as is.
pub fn com_poll(subscription: &AgentSubscription, journal: &Journal) -> (Vec<LedgerEvent>, AgentSubscription) {
    let batch: Vec<LedgerEvent> = journal.after(subscription.last_processed_seq).iter().map(|r| r.event.clone()).collect();
    let mut next = subscription.clone();
    next.last_processed_seq = next.last_processed_seq.max(journal.head());
    (batch, next)
}

#[derive(Debug, Clone)]
pub struct ComAgent {
    view: DaoView,
    subscription: AgentSubscription,
}

impl ComAgent {
    pub fn new(name: impl Into<String>, view: DaoView) -> Self {
        ComAgent { view, subscription: AgentSubscription::new(name) }
    }

    pub fn view(&self) -> DaoView {
        self.view
    }

    pub fn subscription(&self) -> &AgentSubscription {
        &self.subscription
    }

    /// New events visible through this agent's view.
    pub fn poll(&mut self, journal: &Journal) -> Vec<LedgerEvent> {
        let (batch, next) = com_poll(&self.subscription, journal);
        self.subscription = next;
        batch.into_iter().filter(|e| self.view.includes(&e.op)).collect()
    }
}
