// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::tree::BlockTree;
use super::types::{Block, QuorumCert, Vote};
use crate::net::{AuthorId, Round};

/// Switchable rule bugs. All off is the unmutated protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quorum_size_override: Option<usize>,
    #[serde(default)]
    pub accept_equal_round_votes: bool,
    #[serde(default)]
    pub freeze_preferred_round: bool,
    /// Drops the last-voted-round check entirely.
    #[serde(default)]
    pub skip_last_voted_check: bool,
}

impl MutationConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn quorum_2f(num_nodes: usize) -> Self {
        Self { quorum_size_override: Some(2 * super::types::max_faults(num_nodes)), ..Self::default() }
    }

    pub fn equal_round_votes() -> Self {
        Self { accept_equal_round_votes: true, ..Self::default() }
    }

    pub fn frozen_preferred_round() -> Self {
        Self { freeze_preferred_round: true, skip_last_voted_check: true, ..Self::default() }
    }

    pub fn is_mutated(&self) -> bool {
        *self != Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyState {
    pub current_round: Round,
    pub last_voted_round: Round,
    pub preferred_round: Round,
    pub highest_qc: QuorumCert,
}

impl SafetyState {
    pub fn new(num_authors: usize) -> Self {
        Self {
            current_round: 1,
            last_voted_round: 0,
            preferred_round: 0,
            highest_qc: Block::genesis_qc(num_authors),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("round {round} not above last voted round {last_voted}")]
    StaleRound { round: Round, last_voted: Round },
    #[error("parent round {parent_round} below preferred round {preferred}")]
    BelowPreferred { parent_round: Round, preferred: Round },
}

/// Safety Rules 1 and 2, then Update Rules 1 to 3 when voting.
///
/// The block must already be in `tree` so its grandparent can be resolved.
pub fn on_proposal(
    state: &mut SafetyState,
    tree: &BlockTree,
    block: &Block,
    author: AuthorId,
    mutation: &MutationConfig,
) -> Result<Vote, Rejection> {
    let round_ok = mutation.skip_last_voted_check
        || block.round > state.last_voted_round
        || (mutation.accept_equal_round_votes && block.round == state.last_voted_round);
    if !round_ok {
        return Err(Rejection::StaleRound { round: block.round, last_voted: state.last_voted_round });
    }
    let parent_round = block.parent_round();
    if parent_round < state.preferred_round {
        return Err(Rejection::BelowPreferred { parent_round, preferred: state.preferred_round });
    }
    state.last_voted_round = state.last_voted_round.max(block.round);
    if !mutation.freeze_preferred_round {
        state.preferred_round = state.preferred_round.max(tree.grandparent_round(block));
    }
    state.current_round = state.current_round.max(parent_round);
    Ok(Vote { author, block_id: block.id, round: block.round })
}
