// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::safety::{on_proposal, MutationConfig, SafetyState};
use super::tree::{check_commit, BlockTree};
use super::types::{default_quorum, Block, BlockId, QuorumCert, TimeoutCert, TimeoutVote, Vote};
use super::votes::{TimeoutAggregator, VoteAggregator, VoteOutcome};
use crate::net::{AuthorId, MessageKind, NodeId, Recipient, Round, Tick, WireMessage};
use crate::protocol::{Action, CommitEntry, Protocol, TimerToken};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainedMsg {
    Proposal { block: Block, tc: Option<TimeoutCert> },
    Vote(Vote),
    Timeout(TimeoutVote),
}

impl WireMessage for ChainedMsg {
    fn kind(&self) -> MessageKind {
        match self {
            ChainedMsg::Proposal { .. } => MessageKind::Proposal,
            ChainedMsg::Vote(_) => MessageKind::Vote,
            ChainedMsg::Timeout(_) => MessageKind::Timeout,
        }
    }

    fn round(&self) -> Round {
        match self {
            ChainedMsg::Proposal { block, .. } => block.round,
            ChainedMsg::Vote(v) => v.round,
            ChainedMsg::Timeout(t) => t.round,
        }
    }

    fn summary(&self) -> String {
        match self {
            ChainedMsg::Proposal { block, tc } => format!(
                "propose {} r{} parent r{}{}",
                block.id,
                block.round,
                block.parent_round(),
                tc.as_ref().map_or(String::new(), |t| format!(" tc r{}", t.round))
            ),
            ChainedMsg::Vote(v) => format!("vote {} r{} by {}", v.block_id, v.round, v.author),
            ChainedMsg::Timeout(t) => format!("timeout r{} by {} hqc r{}", t.round, t.author, t.high_qc.round),
        }
    }
}

/// Leaders per round; rounds without an entry inherit the closest
/// configured round below (or the lowest one). With no entries at all,
/// leadership rotates round-robin.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeaderSchedule(pub BTreeMap<Round, Vec<AuthorId>>);

impl LeaderSchedule {
    pub fn leaders(&self, round: Round, num_authors: usize) -> Vec<AuthorId> {
        match self.0.range(..=round).next_back().or_else(|| self.0.iter().next()) {
            Some((_, l)) => l.clone(),
            None => vec![AuthorId(round as usize % num_authors.max(1))],
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub node: NodeId,
    pub author: AuthorId,
    pub num_authors: usize,
    pub seed: u64,
    pub leaders: LeaderSchedule,
    pub mutation: MutationConfig,
    /// Ticks before the first timeout of a round; doubles per failed round.
    pub timeout_base: Tick,
}

const MAX_BACKOFF: u32 = 6;

/// One chained-BFT instance.
pub struct ChainedBft {
    cfg: NodeConfig,
    safety: SafetyState,
    tree: BlockTree,
    votes: VoteAggregator,
    timeouts: TimeoutAggregator,
    proposed: BTreeSet<Round>,
    timed_out: BTreeSet<Round>,
    last_tc: Option<TimeoutCert>,
    failures: u32,
    committed: HashSet<BlockId>,
    commit_log: Vec<CommitEntry>,
    notes: Vec<String>,
}

impl ChainedBft {
    pub fn new(cfg: NodeConfig) -> Self {
        let quorum = cfg.mutation.quorum_size_override.unwrap_or_else(|| default_quorum(cfg.num_authors));
        Self {
            safety: SafetyState::new(cfg.num_authors),
            tree: BlockTree::new(cfg.num_authors),
            votes: VoteAggregator::new(quorum),
            timeouts: TimeoutAggregator::new(quorum),
            proposed: BTreeSet::new(),
            timed_out: BTreeSet::new(),
            last_tc: None,
            failures: 0,
            committed: HashSet::new(),
            commit_log: Vec::new(),
            notes: Vec::new(),
            cfg,
        }
    }

    pub fn safety(&self) -> &SafetyState {
        &self.safety
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    fn leaders(&self, round: Round) -> Vec<AuthorId> {
        self.cfg.leaders.leaders(round, self.cfg.num_authors)
    }

    fn is_leader(&self, round: Round) -> bool {
        self.leaders(round).contains(&self.cfg.author)
    }

    fn note(&mut self, text: String) {
        self.notes.push(format!("r{} {}", self.safety.current_round, text));
    }

    /// Distinct per instance, so twins propose different blocks.
    fn payload(&self, round: Round) -> Vec<u8> {
        let mut p = self.cfg.seed.to_be_bytes().to_vec();
        p.extend_from_slice(&round.to_be_bytes());
        p
    }

    fn timeout_budget(&self) -> Tick {
        self.cfg.timeout_base << self.failures.min(MAX_BACKOFF)
    }

    fn enter_round(&mut self, round: Round, now: Tick, out: &mut Vec<Action<ChainedMsg>>) {
        self.safety.current_round = round;
        out.push(Action::SetTimer { at: now + self.timeout_budget(), token: round });
        if self.is_leader(round) && self.proposed.insert(round) {
            let block = Block::new(round, self.safety.highest_qc.clone(), self.payload(round), self.cfg.author);
            self.tree.insert(block.clone()).expect("own highest QC block is known");
            let tc = self.last_tc.clone().filter(|t| t.round + 1 == round);
            out.push(Action::Send { to: Recipient::Broadcast, msg: ChainedMsg::Proposal { block, tc } });
        }
    }

    fn process_qc(&mut self, qc: &QuorumCert, now: Tick, out: &mut Vec<Action<ChainedMsg>>) {
        if !self.tree.contains(&qc.block_id) {
            self.note(format!("qc for unknown block {}", qc.block_id));
            return;
        }
        self.tree.record_qc(qc);
        if qc.round > self.safety.highest_qc.round {
            self.safety.highest_qc = qc.clone();
        }
        if let Some(b0) = check_commit(&self.tree, qc) {
            self.commit(b0);
        }
        if qc.round + 1 > self.safety.current_round {
            self.failures = 0;
            self.enter_round(qc.round + 1, now, out);
        }
    }

    fn process_tc(&mut self, tc: &TimeoutCert, now: Tick, out: &mut Vec<Action<ChainedMsg>>) {
        if tc.round < self.safety.current_round {
            return;
        }
        self.last_tc = Some(tc.clone());
        self.failures += 1;
        self.enter_round(tc.round + 1, now, out);
    }

    fn commit(&mut self, head: BlockId) {
        let committed = &self.committed;
        let branch = self.tree.branch_until(head, |id| committed.contains(id));
        for id in branch {
            let block = self.tree.get(&id).expect("branch blocks are in the tree");
            self.commit_log.push(CommitEntry {
                height: self.tree.height(&id).expect("known block has a height"),
                round: block.round,
                id: hex::encode(id.0),
            });
            self.committed.insert(id);
        }
    }

    fn on_proposal_msg(
        &mut self,
        from: AuthorId,
        block: Block,
        tc: Option<TimeoutCert>,
        now: Tick,
        out: &mut Vec<Action<ChainedMsg>>,
    ) {
        if block.author != Some(from) || !self.leaders(block.round).contains(&from) {
            self.note(format!("proposal {} from non-leader {from}", block.id));
            return;
        }
        if let Some(tc) = &tc {
            self.process_tc(tc, now, out);
        }
        if let Err(e) = self.tree.insert(block.clone()) {
            self.note(format!("proposal {} rejected: {e}", block.id));
            return;
        }
        if let Some(qc) = &block.parent_qc {
            self.process_qc(qc, now, out);
        }
        match on_proposal(&mut self.safety, &self.tree, &block, self.cfg.author, &self.cfg.mutation) {
            Ok(vote) => {
                let to = Recipient::Authors(self.leaders(block.round + 1));
                out.push(Action::Send { to, msg: ChainedMsg::Vote(vote) });
            }
            Err(e) => self.note(format!("no vote for {}: {e}", block.id)),
        }
    }

    fn on_vote_msg(&mut self, vote: Vote, now: Tick, out: &mut Vec<Action<ChainedMsg>>) {
        if !self.is_leader(vote.round + 1) {
            return;
        }
        match self.votes.add(&vote) {
            VoteOutcome::Accepted => {}
            VoteOutcome::Certified(qc) => self.process_qc(&qc, now, out),
            VoteOutcome::Duplicate => self.note(format!("duplicate vote from {} r{}", vote.author, vote.round)),
            VoteOutcome::Equivocating { first } => self.note(format!(
                "equivocating vote from {} r{}: {} after {}",
                vote.author, vote.round, vote.block_id, first
            )),
        }
    }

    fn on_timeout_msg(&mut self, from: AuthorId, tv: TimeoutVote, now: Tick, out: &mut Vec<Action<ChainedMsg>>) {
        if tv.author != from {
            return;
        }
        if self.tree.contains(&tv.high_qc.block_id) {
            self.process_qc(&tv.high_qc, now, out);
        }
        if tv.round < self.safety.current_round {
            return;
        }
        if let Some(tc) = self.timeouts.add(from, tv.round) {
            self.process_tc(&tc, now, out);
        }
    }
}

impl Protocol for ChainedBft {
    type Message = ChainedMsg;

    fn start(&mut self, now: Tick) -> Vec<Action<ChainedMsg>> {
        let mut out = Vec::new();
        self.enter_round(1, now, &mut out);
        out
    }

    fn on_message(&mut self, from: AuthorId, msg: ChainedMsg, now: Tick) -> Vec<Action<ChainedMsg>> {
        let mut out = Vec::new();
        match msg {
            ChainedMsg::Proposal { block, tc } => self.on_proposal_msg(from, block, tc, now, &mut out),
            ChainedMsg::Vote(v) => self.on_vote_msg(v, now, &mut out),
            ChainedMsg::Timeout(t) => self.on_timeout_msg(from, t, now, &mut out),
        }
        out
    }

    fn on_timer(&mut self, token: TimerToken, _now: Tick) -> Vec<Action<ChainedMsg>> {
        let round = token;
        if round != self.safety.current_round || !self.timed_out.insert(round) {
            return Vec::new();
        }
        // No vote for this round after timing out on it.
        self.safety.last_voted_round = self.safety.last_voted_round.max(round);
        let tv = TimeoutVote { author: self.cfg.author, round, high_qc: self.safety.highest_qc.clone() };
        vec![Action::Send { to: Recipient::Broadcast, msg: ChainedMsg::Timeout(tv) }]
    }

    fn commit_log(&self) -> &[CommitEntry] {
        &self.commit_log
    }

    fn current_round(&self) -> Round {
        self.safety.current_round
    }

    fn notes(&self) -> &[String] {
        &self.notes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(author: usize, seed: u64, leaders: &[(Round, &[usize])]) -> ChainedBft {
        let leaders = LeaderSchedule(
            leaders.iter().map(|(r, l)| (*r, l.iter().copied().map(AuthorId).collect())).collect(),
        );
        ChainedBft::new(NodeConfig {
            node: NodeId(author),
            author: AuthorId(author),
            num_authors: 4,
            seed,
            leaders,
            mutation: MutationConfig::none(),
            timeout_base: 10,
        })
    }

    fn proposals(actions: &[Action<ChainedMsg>]) -> Vec<Block> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Send { msg: ChainedMsg::Proposal { block, .. }, .. } => Some(block.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn twins_propose_different_blocks() {
        let mut a = node(0, 1, &[(1, &[0])]);
        let mut a_twin = node(0, 2, &[(1, &[0])]);
        let pa = proposals(&a.start(0));
        let pb = proposals(&a_twin.start(0));
        assert_eq!(pa[0].round, pb[0].round);
        assert_ne!(pa[0].id, pb[0].id);
    }

    #[test]
    fn same_seed_same_block() {
        let p1 = proposals(&node(0, 7, &[(1, &[0])]).start(0));
        let p2 = proposals(&node(0, 7, &[(1, &[0])]).start(0));
        assert_eq!(p1, p2);
    }

    #[test]
    fn leader_proposal_extends_highest_qc() {
        // Node 1 leads round 2 and collects votes on node 0's round-1 block.
        let mut leader0 = node(0, 1, &[(1, &[0]), (2, &[1])]);
        let b1 = proposals(&leader0.start(0)).remove(0);
        let mut leader1 = node(1, 2, &[(1, &[0]), (2, &[1])]);
        leader1.start(0);
        leader1.on_message(AuthorId(0), ChainedMsg::Proposal { block: b1.clone(), tc: None }, 1);
        let mut out = Vec::new();
        for a in 0..3 {
            let v = Vote { author: AuthorId(a), block_id: b1.id, round: 1 };
            out.extend(leader1.on_message(AuthorId(a), ChainedMsg::Vote(v), 2));
        }
        let p = proposals(&out);
        assert_eq!(p.len(), 1);
        assert!(p[0].round > 1);
        assert_eq!(p[0].parent_id(), Some(b1.id));
    }

    #[test]
    fn tc_advances_and_stale_tc_ignored() {
        let mut n = node(2, 3, &[(1, &[0])]);
        n.start(0);
        n.safety.current_round = 2;
        let mut out = Vec::new();
        let tc = TimeoutCert { round: 2, voters: (0..3).map(AuthorId).collect() };
        n.process_tc(&tc, 5, &mut out);
        assert_eq!(n.current_round(), 3);
        n.safety.current_round = 5;
        let stale = TimeoutCert { round: 1, voters: (0..3).map(AuthorId).collect() };
        n.process_tc(&stale, 6, &mut out);
        assert_eq!(n.current_round(), 5);
    }

    #[test]
    fn timeout_budget_doubles_per_failed_round() {
        let mut n = node(1, 1, &[(1, &[0])]);
        assert_eq!(n.timeout_budget(), 10);
        n.failures = 2;
        assert_eq!(n.timeout_budget(), 40);
        n.failures = 40;
        assert_eq!(n.timeout_budget(), 10 << MAX_BACKOFF);
    }

    #[test]
    fn leader_schedule_inherits_and_rotates() {
        let s = LeaderSchedule(BTreeMap::from([(2, vec![AuthorId(3)])]));
        assert_eq!(s.leaders(1, 4), vec![AuthorId(3)]);
        assert_eq!(s.leaders(9, 4), vec![AuthorId(3)]);
        assert_eq!(LeaderSchedule::default().leaders(5, 4), vec![AuthorId(1)]);
    }
}
