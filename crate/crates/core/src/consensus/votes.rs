// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::types::{BlockId, QuorumCert, TimeoutCert, Vote};
use crate::net::{AuthorId, Round};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VoteOutcome {
    Accepted,
    Certified(QuorumCert),
    /// Same author, block and round seen before.
    Duplicate,
    /// Same author and round, different block; the first vote stands.
    Equivocating { first: BlockId },
}

#[derive(Clone, Debug, Default)]
struct RoundVotes {
    first: HashMap<AuthorId, BlockId>,
    per_block: HashMap<BlockId, BTreeSet<AuthorId>>,
}

#[derive(Clone, Debug)]
pub struct VoteAggregator {
    quorum: usize,
    rounds: BTreeMap<Round, RoundVotes>,
}

impl VoteAggregator {
    pub fn new(quorum: usize) -> Self {
        Self { quorum, rounds: BTreeMap::new() }
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn add(&mut self, vote: &Vote) -> VoteOutcome {
        let round = self.rounds.entry(vote.round).or_default();
        if let Some(first) = round.first.get(&vote.author) {
            return if *first == vote.block_id {
                VoteOutcome::Duplicate
            } else {
                VoteOutcome::Equivocating { first: *first }
            };
        }
        round.first.insert(vote.author, vote.block_id);
        let voters = round.per_block.entry(vote.block_id).or_default();
        voters.insert(vote.author);
        if voters.len() == self.quorum {
            VoteOutcome::Certified(QuorumCert {
                block_id: vote.block_id,
                round: vote.round,
                voters: voters.clone(),
            })
        } else {
            VoteOutcome::Accepted
        }
    }
}

#[derive(Clone, Debug)]
pub struct TimeoutAggregator {
    quorum: usize,
    rounds: BTreeMap<Round, BTreeSet<AuthorId>>,
}

impl TimeoutAggregator {
    pub fn new(quorum: usize) -> Self {
        Self { quorum, rounds: BTreeMap::new() }
    }

    /// Returns a TC the first time `round` collects a quorum of authors.
    pub fn add(&mut self, author: AuthorId, round: Round) -> Option<TimeoutCert> {
        let voters = self.rounds.entry(round).or_default();
        if !voters.insert(author) {
            return None;
        }
        (voters.len() == self.quorum).then(|| TimeoutCert { round, voters: voters.clone() })
    }
}
