// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Linear view replacement without responsiveness, one slot. A node votes
//! only for proposals extending the highest QC it knows, and a new leader
//! proposes on its own highest QC without collecting anyone else's. A QC
//! triggers commit votes; `2f+1` of them decide.
//!
//! QCs here carry the certified block's round, so blocks stay well formed
//! under the shared block tree.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{partial_sync_faults, Outbox, View};
use crate::consensus::{Block, BlockId, BlockTree, QuorumCert};
use crate::net::{AuthorId, MessageKind, Recipient, Round, WireMessage};
use crate::protocol::CommitEntry;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TendermintMsg {
    Propose { view: View, block: Block },
    Vote { view: View, block_id: BlockId },
    Certificate { view: View, qc: QuorumCert },
    CommitVote { view: View, block_id: BlockId },
}

impl WireMessage for TendermintMsg {
    fn kind(&self) -> MessageKind {
        match self {
            TendermintMsg::Propose { .. } => MessageKind::Proposal,
            TendermintMsg::Vote { .. } | TendermintMsg::CommitVote { .. } => MessageKind::Vote,
            TendermintMsg::Certificate { .. } => MessageKind::Certificate,
        }
    }

    fn round(&self) -> Round {
        match self {
            TendermintMsg::Propose { view, .. }
            | TendermintMsg::Vote { view, .. }
            | TendermintMsg::Certificate { view, .. }
            | TendermintMsg::CommitVote { view, .. } => *view,
        }
    }

    fn summary(&self) -> String {
        match self {
            TendermintMsg::Propose { view, block } => {
                format!("propose {} ({}) v{view}", block.id, String::from_utf8_lossy(&block.payload))
            }
            TendermintMsg::Vote { view, block_id } => format!("vote {block_id} v{view}"),
            TendermintMsg::Certificate { view, qc } => format!("qc {} v{view}", qc.block_id),
            TendermintMsg::CommitVote { view, block_id } => format!("commit-vote {block_id} v{view}"),
        }
    }
}

/// Vote rule: the proposal must extend the highest QC.
pub fn should_vote(tree: &BlockTree, highest_qc: &QuorumCert, block: &Block) -> bool {
    tree.extends(block.id, highest_qc.block_id)
}

#[derive(Clone, Debug)]
pub struct TendermintNode {
    author: AuthorId,
    n: usize,
    f: usize,
    input: String,
    leaders: BTreeMap<View, AuthorId>,
    view: View,
    tree: BlockTree,
    highest_qc: QuorumCert,
    last_voted: Option<BlockId>,
    voted_views: BTreeSet<View>,
    votes: BTreeMap<(View, BlockId), BTreeSet<AuthorId>>,
    commit_votes: BTreeMap<BlockId, BTreeSet<AuthorId>>,
    commits: Vec<CommitEntry>,
    notes: Vec<String>,
}

impl TendermintNode {
    pub fn new(author: AuthorId, n: usize, input: &str, leaders: BTreeMap<View, AuthorId>) -> Self {
        Self {
            author,
            n,
            f: partial_sync_faults(n),
            input: input.to_string(),
            leaders,
            view: 1,
            tree: BlockTree::new(n),
            highest_qc: Block::genesis_qc(n),
            last_voted: None,
            voted_views: BTreeSet::new(),
            votes: BTreeMap::new(),
            commit_votes: BTreeMap::new(),
            commits: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn leader(&self, view: View) -> AuthorId {
        self.leaders.get(&view).copied().unwrap_or(AuthorId((view as usize - 1) % self.n))
    }

    pub fn highest_qc(&self) -> &QuorumCert {
        &self.highest_qc
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn commits(&self) -> &[CommitEntry] {
        &self.commits
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn label(&self, id: &BlockId) -> String {
        self.tree.get(id).map_or_else(|| id.to_string(), |b| String::from_utf8_lossy(&b.payload).into_owned())
    }

    pub fn start(&mut self) -> Outbox<TendermintMsg> {
        self.propose_if_leader()
    }

    pub fn enter_view(&mut self, view: View) -> Outbox<TendermintMsg> {
        self.view = view;
        self.propose_if_leader()
    }

    /// Re-propose the last block voted for if it still extends the highest
    /// QC and is not itself certified; otherwise extend the QC with the
    /// node's input.
    fn propose_if_leader(&mut self) -> Outbox<TendermintMsg> {
        if self.leader(self.view) != self.author {
            return Vec::new();
        }
        let pending = self.last_voted.and_then(|id| self.tree.get(&id)).filter(|b| {
            b.id != self.highest_qc.block_id && self.tree.extends(b.id, self.highest_qc.block_id)
        });
        let block = match pending {
            Some(b) => b.clone(),
            None => Block::new(self.view, self.highest_qc.clone(), self.input.as_bytes().to_vec(), self.author),
        };
        vec![(Recipient::Broadcast, TendermintMsg::Propose { view: self.view, block })]
    }

    pub fn on_message(&mut self, from: AuthorId, msg: TendermintMsg) -> Outbox<TendermintMsg> {
        match msg {
            TendermintMsg::Propose { view, block } => self.on_proposal(from, view, block),
            TendermintMsg::Vote { view, block_id } => {
                if self.leader(view) != self.author || !self.tree.contains(&block_id) {
                    return Vec::new();
                }
                let voters = self.votes.entry((view, block_id)).or_default();
                voters.insert(from);
                if voters.len() != 2 * self.f + 1 {
                    return Vec::new();
                }
                let voters = voters.clone();
                let round = self.tree.get(&block_id).map_or(0, |b| b.round);
                let label = self.label(&block_id);
                self.notes.push(format!("view {view}: qc for {label}"));
                let qc = QuorumCert { block_id, round, voters };
                vec![(Recipient::Broadcast, TendermintMsg::Certificate { view, qc })]
            }
            TendermintMsg::Certificate { view, qc } => {
                if qc.voters.len() < 2 * self.f + 1 || !self.tree.contains(&qc.block_id) {
                    return Vec::new();
                }
                self.tree.record_qc(&qc);
                let block_id = qc.block_id;
                if self.is_higher(&qc) {
                    self.highest_qc = qc;
                }
                vec![(Recipient::Broadcast, TendermintMsg::CommitVote { view, block_id })]
            }
            TendermintMsg::CommitVote { view, block_id } => {
                let voters = self.commit_votes.entry(block_id).or_default();
                voters.insert(from);
                if voters.len() == 2 * self.f + 1 && self.tree.contains(&block_id) {
                    self.decide(block_id, view);
                }
                Vec::new()
            }
        }
    }

    fn on_proposal(&mut self, from: AuthorId, view: View, block: Block) -> Outbox<TendermintMsg> {
        if view != self.view || from != self.leader(view) || self.voted_views.contains(&view) {
            return Vec::new();
        }
        if let Err(e) = self.tree.insert(block.clone()) {
            self.notes.push(format!("view {view}: cannot place proposal: {e}"));
            return Vec::new();
        }
        if !should_vote(&self.tree, &self.highest_qc, &block) {
            let label = String::from_utf8_lossy(&block.payload).into_owned();
            let held = self.label(&self.highest_qc.block_id);
            self.notes.push(format!("view {view}: not voting for {label}, it does not extend qc({held})"));
            return Vec::new();
        }
        self.voted_views.insert(view);
        self.last_voted = Some(block.id);
        vec![(Recipient::Author(self.leader(view)), TendermintMsg::Vote { view, block_id: block.id })]
    }

    fn is_higher(&self, qc: &QuorumCert) -> bool {
        let h = |id: &BlockId| self.tree.height(id).unwrap_or(0);
        (h(&qc.block_id), qc.round) > (h(&self.highest_qc.block_id), self.highest_qc.round)
    }

    fn decide(&mut self, block_id: BlockId, view: View) {
        let known: BTreeSet<String> = self.commits.iter().map(|c| c.id.clone()).collect();
        for id in self.tree.branch_until(block_id, |_| false) {
            let hex = hex::encode(id.0);
            if known.contains(&hex) {
                continue;
            }
            let height = self.tree.height(&id).unwrap_or(0);
            self.commits.push(CommitEntry { height, round: view, id: hex });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flood(nodes: &mut [TendermintNode], mut out: Vec<(usize, Outbox<TendermintMsg>)>) {
        while let Some((src, batch)) = out.pop() {
            for (to, msg) in batch {
                for dst in 0..nodes.len() {
                    let hit = match &to {
                        Recipient::Broadcast => true,
                        Recipient::Author(a) => a.0 == dst,
                        Recipient::Authors(v) => v.iter().any(|a| a.0 == dst),
                    };
                    if hit {
                        let more = nodes[dst].on_message(AuthorId(src), msg.clone());
                        out.push((dst, more));
                    }
                }
            }
        }
    }

    #[test]
    fn votes_only_when_extending_highest_qc() {
        let n = 4;
        let mut tree = BlockTree::new(n);
        let g = Block::genesis_qc(n);
        let v1 = Block::new(1, g.clone(), b"V1".to_vec(), AuthorId(0));
        let v2 = Block::new(1, g.clone(), b"V2".to_vec(), AuthorId(0));
        tree.insert(v1.clone()).unwrap();
        tree.insert(v2.clone()).unwrap();
        let qc1 = QuorumCert { block_id: v1.id, round: 1, voters: (0..3).map(AuthorId).collect() };
        assert!(!should_vote(&tree, &qc1, &v2));
        let v3 = Block::new(2, qc1.clone(), b"V3".to_vec(), AuthorId(1));
        tree.insert(v3.clone()).unwrap();
        assert!(should_vote(&tree, &qc1, &v3));
        assert!(should_vote(&tree, &g, &v2));
    }

    /// Every pairing of the four highest-QC states reachable in the replay:
    /// two nodes vote for one proposal only if it extends both of their QCs.
    #[test]
    fn diverged_nodes_never_share_a_vote() {
        let n = 4;
        let mut tree = BlockTree::new(n);
        let g = Block::genesis_qc(n);
        let q = |b: &Block| QuorumCert { block_id: b.id, round: b.round, voters: (0..3).map(AuthorId).collect() };
        let v1 = Block::new(1, g.clone(), b"V1".to_vec(), AuthorId(0));
        let v2 = Block::new(1, g.clone(), b"V2".to_vec(), AuthorId(0));
        let v3 = Block::new(3, q(&v1), b"V3".to_vec(), AuthorId(1));
        let v4 = Block::new(4, q(&v2), b"V4".to_vec(), AuthorId(2));
        for b in [&v1, &v2, &v3, &v4] {
            tree.insert(b.clone()).unwrap();
        }
        let states = [g.clone(), q(&v1), q(&v2), q(&v3)];
        let proposals = [&v1, &v2, &v3, &v4];
        for a in &states {
            for b in &states {
                for p in proposals {
                    let both = should_vote(&tree, a, p) && should_vote(&tree, b, p);
                    let extends_both = tree.extends(p.id, a.block_id) && tree.extends(p.id, b.block_id);
                    assert_eq!(both, extends_both);
                }
            }
        }
    }

    #[test]
    fn aligned_leaders_decide_within_three_views() {
        let mut nodes: Vec<_> = (0..4).map(|i| TendermintNode::new(AuthorId(i), 4, &format!("V{i}"), BTreeMap::new())).collect();
        let start: Vec<_> = nodes.iter_mut().enumerate().map(|(i, n)| (i, n.start())).collect();
        flood(&mut nodes, start);
        for node in &nodes {
            assert_eq!(node.commits().len(), 1);
            assert_eq!(node.commits()[0].height, 1);
        }
        let first = nodes[0].commits()[0].id.clone();
        assert!(nodes.iter().all(|n| n.commits()[0].id == first));
    }

    #[test]
    fn leader_reproposes_pending_vote() {
        let mut leaders = BTreeMap::new();
        leaders.insert(1, AuthorId(0));
        leaders.insert(2, AuthorId(1));
        let mut a = TendermintNode::new(AuthorId(0), 4, "A", leaders.clone());
        let mut b = TendermintNode::new(AuthorId(1), 4, "B", leaders);
        let out = a.start();
        let (_, TendermintMsg::Propose { block, .. }) = &out[0] else { panic!() };
        b.on_message(AuthorId(0), out[0].1.clone());
        let out = b.enter_view(2);
        let (_, TendermintMsg::Propose { block: again, view }) = &out[0] else { panic!() };
        assert_eq!((again.id, *view), (block.id, 2));
    }
}
