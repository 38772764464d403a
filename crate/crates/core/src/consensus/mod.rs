// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Chained BFT with the LibraBFT voting and update rules.

mod node;
mod safety;
mod tree;
mod types;
mod votes;

pub use node::{ChainedBft, ChainedMsg, LeaderSchedule, NodeConfig};
pub use safety::{on_proposal, MutationConfig, Rejection, SafetyState};
pub use tree::{check_commit, BlockTree, TreeError};
pub use types::{default_quorum, max_faults, Block, BlockId, QuorumCert, TimeoutCert, TimeoutVote, Vote};
pub use votes::{TimeoutAggregator, VoteAggregator, VoteOutcome};
