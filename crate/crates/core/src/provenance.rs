//! Spreading trees of tax credits, projected from the journal.
//!
//! Each credit code gets one tree. The root is the operator mint; every
//! transfer hangs under the node that created the batch it draws from, and
//! every redeem is a leaf under the same kind of parent. A node's residue
//! (amount minus what its children drew) is exactly the live amount of the
//! batch it created, so the tree reconciles with the ledger at every prefix.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::event::{LedgerEvent, Op};
use crate::types::{ActorId, BatchId, CreditCode, Money, Seq};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvenanceError {
    #[error("no operator mint for credit code {0}")]
    UnknownCreditCode(CreditCode),
    #[error("node {0} is not in the tree")]
    UnknownNode(NodeId),
}

impl ProvenanceError {
    pub fn code(&self) -> &'static str {
        match self {
            ProvenanceError::UnknownCreditCode(_) => "UNKNOWN_CREDIT_CODE",
            ProvenanceError::UnknownNode(_) => "UNKNOWN_NODE",
        }
    }
}

/// `(event seq, output index)`; stable across replays. Written as `"seq.index"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub seq: Seq,
    pub index: u32,
}

impl NodeId {
    pub fn new(seq: u64, index: u32) -> Self {
        NodeId { seq: Seq(seq), index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.seq, self.index)
    }
}

impl FromStr for NodeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (seq, index) = s.split_once('.').ok_or_else(|| format!("bad node id {s:?}"))?;
        Ok(NodeId {
            seq: Seq(seq.parse().map_err(|_| format!("bad node id {s:?}"))?),
            index: index.parse().map_err(|_| format!("bad node id {s:?}"))?,
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Mint,
    Transfer,
    Redeem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditTreeNode {
    pub node_id: NodeId,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
    pub actor_from: ActorId,
    pub actor_to: ActorId,
    pub amount: Money,
    pub event_seq: Seq,
}

/// Canonical form: `credit_code`, then `nodes` sorted by node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TreeRecord", try_from = "TreeRecord")]
pub struct CreditTree {
    credit_code: CreditCode,
    nodes: BTreeMap<NodeId, CreditTreeNode>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    credit_code: CreditCode,
    nodes: Vec<CreditTreeNode>,
}

impl From<CreditTree> for TreeRecord {
    fn from(t: CreditTree) -> Self {
        TreeRecord { credit_code: t.credit_code, nodes: t.nodes.into_values().collect() }
    }
}

impl TryFrom<TreeRecord> for CreditTree {
    type Error = String;
    fn try_from(r: TreeRecord) -> Result<Self, Self::Error> {
        let mut tree = CreditTree::new(r.credit_code);
        for n in r.nodes {
            if tree.nodes.contains_key(&n.node_id) {
                return Err(format!("duplicate node {}", n.node_id));
            }
            tree.insert(n);
        }
        Ok(tree)
    }
}

impl CreditTree {
    pub fn new(credit_code: CreditCode) -> Self {
        CreditTree { credit_code, nodes: BTreeMap::new() }
    }

    pub fn credit_code(&self) -> &CreditCode {
        &self.credit_code
    }

    /// Inserts or replaces a node. Used by the projection and by fixtures.
    pub fn insert(&mut self, node: CreditTreeNode) {
        self.nodes.insert(node.node_id, node);
    }

    pub fn node(&self, id: NodeId) -> Option<&CreditTreeNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CreditTreeNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<&CreditTreeNode> {
        self.nodes.values().find(|n| n.parent.is_none())
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = &CreditTreeNode> {
        self.nodes.values().filter(move |n| n.parent == Some(id))
    }

    fn children_total(&self, id: NodeId) -> u128 {
        self.children(id).map(|c| u128::from(c.amount.cents())).sum()
    }

    /// Path from the root mint down to `id`; the actors along it form the
    /// custody chain.
    pub fn trace_to_root(&self, id: NodeId) -> Result<Vec<&CreditTreeNode>, ProvenanceError> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(cur) = cursor {
            let node = self.nodes.get(&cur).ok_or(ProvenanceError::UnknownNode(cur))?;
            path.push(node);
            cursor = node.parent;
            if path.len() > self.nodes.len() {
                // A parent cycle can only come from a hand-built tree.
                return Err(ProvenanceError::UnknownNode(id));
            }
        }
        path.reverse();
        Ok(path)
    }

    /// Flags every node whose children draw more than the node holds.
    pub fn check_conservation(&self) -> Result<(), Vec<NodeId>> {
        let bad: Vec<NodeId> = self
            .nodes
            .keys()
            .copied()
            .filter(|&id| self.children_total(id) > u128::from(self.nodes[&id].amount.cents()))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    /// Value still held: Σ over mint/transfer nodes of amount − Σ children.
    pub fn residue(&self) -> Money {
        let cents: u128 = self
            .nodes
            .values()
            .filter(|n| n.kind != NodeKind::Redeem)
            .map(|n| u128::from(n.amount.cents()).saturating_sub(self.children_total(n.node_id)))
            .sum();
        Money::from_cents(u64::try_from(cents).expect("bounded by root amount"))
    }

    /// Σ of redeem-node amounts.
    pub fn redeemed(&self) -> Money {
        self.nodes.values().filter(|n| n.kind == NodeKind::Redeem).map(|n| n.amount).sum()
    }

    /// Indented text view, one node per line, children in node-id order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.root() {
            self.render_node(root, 0, &mut out);
        }
        out
    }

    fn render_node(&self, node: &CreditTreeNode, depth: usize, out: &mut String) {
        let _ = writeln!(
            out,
            "{:indent$}{:?} {} -> {} {} cents seq={}",
            "",
            node.kind,
            node.actor_from,
            node.actor_to,
            node.amount.cents(),
            node.event_seq,
            indent = depth * 2
        );
        for child in self.children(node.node_id) {
            self.render_node(child, depth + 1, out);
        }
    }
}

/// Incremental projection of every credit tree. Assumes a journal that the
/// ledger has accepted; events that do not touch operator tokens are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProvenanceIndex {
    trees: BTreeMap<CreditCode, CreditTree>,
    batch_nodes: BTreeMap<BatchId, (CreditCode, NodeId)>,
    batch_remaining: BTreeMap<BatchId, Money>,
    next_batch: u64,
    only: Option<CreditCode>,
}

impl ProvenanceIndex {
    pub fn new() -> Self {
        ProvenanceIndex { next_batch: 1, ..Default::default() }
    }

    /// Index that only materializes nodes for one credit code.
    pub fn for_code(code: CreditCode) -> Self {
        ProvenanceIndex { only: Some(code), ..Self::new() }
    }

    pub fn tree(&self, code: &CreditCode) -> Option<&CreditTree> {
        self.trees.get(code)
    }

    pub fn trees(&self) -> impl Iterator<Item = &CreditTree> {
        self.trees.values()
    }

    /// Tree node that created `batch`, if the batch ever existed.
    pub fn batch_node(&self, batch: BatchId) -> Option<&(CreditCode, NodeId)> {
        self.batch_nodes.get(&batch)
    }

    fn tracked(&self, code: &CreditCode) -> bool {
        self.only.as_ref().is_none_or(|c| c == code)
    }

    fn add_batch(&mut self, batch: BatchId, code: CreditCode, node: NodeId, amount: Money) {
        self.batch_nodes.insert(batch, (code, node));
        self.batch_remaining.insert(batch, amount);
        self.next_batch = batch.0 + 1;
    }

    fn draw(&mut self, batch: BatchId, amount: Money) -> Option<(CreditCode, NodeId)> {
        let remaining = self.batch_remaining.get_mut(&batch)?;
        *remaining = remaining.checked_sub(amount).unwrap_or(Money::ZERO);
        self.batch_nodes.get(&batch).cloned()
    }

    /// Projects one event; returns the node it created, if any.
    pub fn apply(&mut self, event: &LedgerEvent) -> Option<(CreditCode, NodeId)> {
        let node_id = NodeId { seq: event.seq, index: 0 };
        let (code, node) = match &event.op {
            Op::OperatorMint { fi, to, amount, credit_code, batch_id, .. } => {
                self.add_batch(*batch_id, credit_code.clone(), node_id, *amount);
                let node = CreditTreeNode {
                    node_id,
                    parent: None,
                    kind: NodeKind::Mint,
                    actor_from: fi.clone(),
                    actor_to: to.clone(),
                    amount: *amount,
                    event_seq: event.seq,
                };
                (credit_code.clone(), node)
            }
            Op::Transfer { from, to, batch_id, amount, new_batch_id } => {
                let (code, parent) = self.draw(*batch_id, *amount)?;
                self.add_batch(*new_batch_id, code.clone(), node_id, *amount);
                let node = CreditTreeNode {
                    node_id,
                    parent: Some(parent),
                    kind: NodeKind::Transfer,
                    actor_from: from.clone(),
                    actor_to: to.clone(),
                    amount: *amount,
                    event_seq: event.seq,
                };
                (code, node)
            }
            Op::Redeem { holder, fi, batch_id, amount } => {
                let (code, parent) = self.draw(*batch_id, *amount)?;
                let node = CreditTreeNode {
                    node_id,
                    parent: Some(parent),
                    kind: NodeKind::Redeem,
                    actor_from: holder.clone(),
                    actor_to: fi.clone(),
                    amount: *amount,
                    event_seq: event.seq,
                };
                (code, node)
            }
            _ => return None,
        };
        if self.tracked(&code) {
            self.trees.entry(code.clone()).or_insert_with(|| CreditTree::new(code.clone())).insert(node);
        }
        Some((code, node_id))
    }
}

/// Builds the tree of `code` from a journal prefix.
pub fn build_tree<'a>(
    events: impl IntoIterator<Item = &'a LedgerEvent>,
    code: &CreditCode,
) -> Result<CreditTree, ProvenanceError> {
    let mut index = ProvenanceIndex::for_code(code.clone());
    for ev in events {
        index.apply(ev);
    }
    index.trees.remove(code).ok_or_else(|| ProvenanceError::UnknownCreditCode(code.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LinkId, Timestamp};

    fn a(s: &str) -> ActorId {
        ActorId::new(s).unwrap()
    }

    fn c(s: &str) -> CreditCode {
        CreditCode::new(s).unwrap()
    }

    fn ev(seq: u64, op: Op) -> LedgerEvent {
        LedgerEvent { seq: Seq(seq), timestamp: Timestamp(seq), actor: op.invoker().clone(), op }
    }

    fn mint(seq: u64, code: &str, batch: u64, amount: u64) -> LedgerEvent {
        ev(
            seq,
            Op::OperatorMint {
                fi: a("bank1"),
                to: a("gc1"),
                amount: Money::from_cents(amount),
                credit_code: c(code),
                link_id: LinkId(batch),
                batch_id: BatchId(batch),
            },
        )
    }

    fn transfer(seq: u64, from: &str, to: &str, batch: u64, new: u64, amount: u64) -> LedgerEvent {
        ev(
            seq,
            Op::Transfer {
                from: a(from),
                to: a(to),
                batch_id: BatchId(batch),
                amount: Money::from_cents(amount),
                new_batch_id: BatchId(new),
            },
        )
    }

    fn redeem(seq: u64, holder: &str, batch: u64, amount: u64) -> LedgerEvent {
        ev(
            seq,
            Op::Redeem { holder: a(holder), fi: a("bank1"), batch_id: BatchId(batch), amount: Money::from_cents(amount) },
        )
    }

    #[test]
    fn mint_only_is_single_root() {
        let tree = build_tree(&[mint(5, "C1", 1, 40_000)], &c("C1")).unwrap();
        assert_eq!(tree.len(), 1);
        let root = tree.root().unwrap();
        assert_eq!((root.kind, root.amount, root.node_id), (NodeKind::Mint, Money::from_cents(40_000), NodeId::new(5, 0)));
        assert_eq!(tree.children(root.node_id).count(), 0);
    }

    #[test]
    fn mint_transfer_redeem_hand_drawn() {
        // Mint(40k)@1 ─┬─ Transfer gc1→sup1 15k @2
        //              └─ Redeem gc1→bank1 25k @3
        let journal = [mint(1, "C1", 1, 40_000), transfer(2, "gc1", "sup1", 1, 2, 15_000), redeem(3, "gc1", 1, 25_000)];
        let tree = build_tree(&journal, &c("C1")).unwrap();
        let kids: Vec<_> = tree
            .children(NodeId::new(1, 0))
            .map(|n| (n.kind, n.actor_from.as_str(), n.actor_to.as_str(), n.amount.cents()))
            .collect();
        assert_eq!(kids, vec![(NodeKind::Transfer, "gc1", "sup1", 15_000), (NodeKind::Redeem, "gc1", "bank1", 25_000)]);
        assert_eq!(tree.residue(), Money::from_cents(15_000));
        assert_eq!(tree.check_conservation(), Ok(()));
    }

    #[test]
    fn unknown_code() {
        assert_eq!(
            build_tree(&[mint(1, "C1", 1, 10)], &c("C9")),
            Err(ProvenanceError::UnknownCreditCode(c("C9")))
        );
    }

    #[test]
    fn other_codes_are_not_materialized() {
        let journal = [mint(1, "C1", 1, 10), mint(2, "C2", 2, 20), transfer(3, "gc1", "sup1", 2, 3, 5)];
        let tree = build_tree(&journal, &c("C1")).unwrap();
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn trace_three_level_chain() {
        let journal = [mint(1, "C1", 1, 100), transfer(2, "gc1", "sup1", 1, 2, 60), transfer(3, "sup1", "sub1", 2, 3, 30)];
        let tree = build_tree(&journal, &c("C1")).unwrap();
        let path: Vec<_> = tree.trace_to_root(NodeId::new(3, 0)).unwrap().iter().map(|n| n.event_seq.0).collect();
        assert_eq!(path, vec![1, 2, 3]);
        let root_only: Vec<_> = tree.trace_to_root(NodeId::new(1, 0)).unwrap().iter().map(|n| n.node_id).collect();
        assert_eq!(root_only, vec![NodeId::new(1, 0)]);
        assert_eq!(tree.trace_to_root(NodeId::new(7, 0)), Err(ProvenanceError::UnknownNode(NodeId::new(7, 0))));
    }

    #[test]
    fn corrupted_tree_is_flagged() {
        let mut tree = build_tree(&[mint(1, "C1", 1, 40_000)], &c("C1")).unwrap();
        tree.insert(CreditTreeNode {
            node_id: NodeId::new(2, 0),
            parent: Some(NodeId::new(1, 0)),
            kind: NodeKind::Transfer,
            actor_from: a("gc1"),
            actor_to: a("sup1"),
            amount: Money::from_cents(50_000),
            event_seq: Seq(2),
        });
        assert_eq!(tree.check_conservation(), Err(vec![NodeId::new(1, 0)]));
    }

    #[test]
    fn leafless_tree_conserves() {
        let tree = CreditTree::new(c("C1"));
        assert_eq!(tree.check_conservation(), Ok(()));
        assert_eq!(tree.residue(), Money::ZERO);
    }

    #[test]
    fn canonical_serialization_orders_fields_and_nodes() {
        let journal = [mint(1, "C1", 1, 100), transfer(10, "gc1", "sup1", 1, 2, 60), transfer(2, "gc1", "sub1", 1, 3, 30)];
        let tree = build_tree(&journal, &c("C1")).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        assert!(json.starts_with(r#"{"credit_code":"C1","nodes":[{"node_id":"1.0""#), "{json}");
        let pos2 = json.find(r#""node_id":"2.0""#).unwrap();
        let pos10 = json.find(r#""node_id":"10.0""#).unwrap();
        assert!(pos2 < pos10);
        let back: CreditTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
    }

    #[test]
    fn render_indents_children() {
        let journal = [mint(1, "C1", 1, 100), transfer(2, "gc1", "sup1", 1, 2, 60), transfer(3, "sup1", "sub1", 2, 3, 30)];
        let text = build_tree(&journal, &c("C1")).unwrap().render();
        assert_eq!(
            text,
            "Mint bank1 -> gc1 100 cents seq=1\n  Transfer gc1 -> sup1 60 cents seq=2\n    Transfer sup1 -> sub1 30 cents seq=3\n"
        );
    }
}
