// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt;

use crate::net::{AuthorId, Round};

/// Content hash of a block.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub [u8; 32]);

impl BlockId {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({})", self.short())
    }
}

impl Serialize for BlockId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("block id must be 32 bytes"))?;
        Ok(BlockId(arr))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumCert {
    pub block_id: BlockId,
    pub round: Round,
    pub voters: BTreeSet<AuthorId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub round: Round,
    /// `None` only for genesis.
    pub parent_qc: Option<QuorumCert>,
    pub payload: Vec<u8>,
    pub author: Option<AuthorId>,
}

impl Block {
    pub fn compute_id(round: Round, parent: Option<BlockId>, payload: &[u8], author: Option<AuthorId>) -> BlockId {
        let mut h = Sha256::new();
        h.update(round.to_be_bytes());
        match parent {
            Some(p) => h.update(p.0),
            None => h.update([0u8; 32]),
        }
        h.update((payload.len() as u64).to_be_bytes());
        h.update(payload);
        match author {
            Some(a) => h.update((a.0 as u64 + 1).to_be_bytes()),
            None => h.update(0u64.to_be_bytes()),
        }
        BlockId(h.finalize().into())
    }

    pub fn new(round: Round, parent_qc: QuorumCert, payload: Vec<u8>, author: AuthorId) -> Self {
        let id = Self::compute_id(round, Some(parent_qc.block_id), &payload, Some(author));
        Self { id, round, parent_qc: Some(parent_qc), payload, author: Some(author) }
    }

    pub fn genesis() -> Self {
        let payload = b"genesis".to_vec();
        let id = Self::compute_id(0, None, &payload, None);
        Self { id, round: 0, parent_qc: None, payload, author: None }
    }

    /// Genesis is certified by every author so rule checks need no special case.
    pub fn genesis_qc(num_authors: usize) -> QuorumCert {
        QuorumCert {
            block_id: Self::genesis().id,
            round: 0,
            voters: (0..num_authors).map(AuthorId).collect(),
        }
    }

    pub fn parent_id(&self) -> Option<BlockId> {
        self.parent_qc.as_ref().map(|q| q.block_id)
    }

    /// Round of the block certified by the carried QC.
    pub fn parent_round(&self) -> Round {
        self.parent_qc.as_ref().map_or(0, |q| q.round)
    }

    pub fn is_well_formed(&self) -> bool {
        let expected = Self::compute_id(self.round, self.parent_id(), &self.payload, self.author);
        expected == self.id
            && match &self.parent_qc {
                Some(q) => self.round > q.round,
                None => self.round == 0,
            }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub author: AuthorId,
    pub block_id: BlockId,
    pub round: Round,
}

/// A vote on the nil block of `round`; carries the sender's highest QC so
/// the next leader can extend it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutVote {
    pub author: AuthorId,
    pub round: Round,
    pub high_qc: QuorumCert,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutCert {
    pub round: Round,
    pub voters: BTreeSet<AuthorId>,
}

/// Byzantine threshold for `n` authors.
pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

pub fn default_quorum(n: usize) -> usize {
    2 * max_faults(n) + 1
}
