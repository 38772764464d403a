// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use super::types::{Block, BlockId, QuorumCert};
use crate::net::Round;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("parent {0} of the block is unknown")]
    MissingParent(BlockId),
    #[error("block {0} does not hash to its id or breaks round order")]
    Malformed(BlockId),
}

/// Blocks known to one instance, with the first QC seen for each.
#[derive(Clone, Debug)]
pub struct BlockTree {
    blocks: HashMap<BlockId, Block>,
    heights: HashMap<BlockId, u64>,
    certs: HashMap<BlockId, QuorumCert>,
    genesis: BlockId,
}

impl BlockTree {
    pub fn new(num_authors: usize) -> Self {
        let genesis = Block::genesis();
        let id = genesis.id;
        let mut tree = Self {
            blocks: HashMap::new(),
            heights: HashMap::new(),
            certs: HashMap::new(),
            genesis: id,
        };
        tree.blocks.insert(id, genesis);
        tree.heights.insert(id, 0);
        tree.certs.insert(id, Block::genesis_qc(num_authors));
        tree
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn height(&self, id: &BlockId) -> Option<u64> {
        self.heights.get(id).copied()
    }

    pub fn parent(&self, block: &Block) -> Option<&Block> {
        block.parent_id().and_then(|p| self.blocks.get(&p))
    }

    /// Round of the parent's certified parent; 0 when it runs into genesis.
    pub fn grandparent_round(&self, block: &Block) -> Round {
        self.parent(block).map_or(0, Block::parent_round)
    }

    pub fn insert(&mut self, block: Block) -> Result<(), TreeError> {
        if self.blocks.contains_key(&block.id) {
            return Ok(());
        }
        if !block.is_well_formed() {
            return Err(TreeError::Malformed(block.id));
        }
        let parent = block.parent_id().ok_or(TreeError::Malformed(block.id))?;
        let parent_height = self.height(&parent).ok_or(TreeError::MissingParent(parent))?;
        self.heights.insert(block.id, parent_height + 1);
        // The carried QC certifies the parent.
        if let Some(qc) = &block.parent_qc {
            self.certs.entry(qc.block_id).or_insert_with(|| qc.clone());
        }
        self.blocks.insert(block.id, block);
        Ok(())
    }

    /// Returns true if this is the first QC seen for its block.
    pub fn record_qc(&mut self, qc: &QuorumCert) -> bool {
        if self.certs.contains_key(&qc.block_id) {
            return false;
        }
        self.certs.insert(qc.block_id, qc.clone());
        true
    }

    pub fn qc_for(&self, id: &BlockId) -> Option<&QuorumCert> {
        self.certs.get(id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.values()
    }

    /// Ancestors of `id` (inclusive), oldest first, stopping before genesis
    /// or the first block for which `stop` holds.
    pub fn branch_until(&self, id: BlockId, stop: impl Fn(&BlockId) -> bool) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == self.genesis || stop(&c) {
                break;
            }
            out.push(c);
            cur = self.blocks.get(&c).and_then(Block::parent_id);
        }
        out.reverse();
        out
    }

    pub fn extends(&self, descendant: BlockId, ancestor: BlockId) -> bool {
        let mut cur = Some(descendant);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.blocks.get(&c).and_then(Block::parent_id);
        }
        false
    }
}

/// 3-chain rule: the QC's block heads B0 <- B1 <- B2 with rounds r, r+1,
/// r+2; returns B0. Genesis is committed implicitly and never returned.
pub fn check_commit(tree: &BlockTree, newest_qc: &QuorumCert) -> Option<BlockId> {
    let b2 = tree.get(&newest_qc.block_id)?;
    let b1 = tree.parent(b2)?;
    let b0 = tree.parent(b1)?;
    if b0.id == tree.genesis_id() {
        return None;
    }
    (b1.round == b0.round + 1 && b2.round == b1.round + 1).then_some(b0.id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::AuthorId;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn qc_of(b: &Block) -> QuorumCert {
        QuorumCert { block_id: b.id, round: b.round, voters: (0..3).map(AuthorId).collect() }
    }

    fn chain(rounds: &[Round]) -> (BlockTree, Vec<Block>) {
        let mut tree = BlockTree::new(4);
        let mut parent = Block::genesis_qc(4);
        let mut out = Vec::new();
        for &r in rounds {
            let b = Block::new(r, parent, vec![r as u8], AuthorId(0));
            tree.insert(b.clone()).unwrap();
            parent = qc_of(&b);
            out.push(b);
        }
        (tree, out)
    }

    #[test]
    fn consecutive_rounds_commit_the_first() {
        let (tree, blocks) = chain(&[1, 2, 3]);
        assert_eq!(check_commit(&tree, &qc_of(&blocks[2])), Some(blocks[0].id));
    }

    #[test]
    fn gap_breaks_the_chain() {
        let (tree, blocks) = chain(&[1, 2, 4]);
        assert_eq!(check_commit(&tree, &qc_of(&blocks[2])), None);
    }

    #[test]
    fn genesis_alone_commits_nothing() {
        let tree = BlockTree::new(4);
        assert_eq!(check_commit(&tree, &Block::genesis_qc(4)), None);
        let (tree, blocks) = chain(&[1, 2]);
        assert_eq!(check_commit(&tree, &qc_of(&blocks[1])), None);
    }

    #[test]
    fn missing_parent_rejected() {
        let mut tree = BlockTree::new(4);
        let (_, blocks) = chain(&[1, 2]);
        assert!(matches!(tree.insert(blocks[1].clone()), Err(TreeError::MissingParent(_))));
    }

    #[test]
    fn branch_is_oldest_first() {
        let (tree, blocks) = chain(&[1, 2, 3]);
        let ids: Vec<_> = blocks.iter().map(|b| b.id).collect();
        assert_eq!(tree.branch_until(ids[2], |_| false), ids);
        assert_eq!(tree.branch_until(ids[2], |i| *i == ids[0]), ids[1..].to_vec());
        assert!(tree.extends(ids[2], ids[0]));
        assert!(!tree.extends(ids[0], ids[2]));
    }

    /// Random tree: block i picks a parent among earlier blocks and a round
    /// above the parent's.
    fn arb_tree() -> impl Strategy<Value = (Vec<(usize, Round)>, Vec<bool>, Vec<usize>)> {
        (1usize..20).prop_flat_map(|n| {
            (
                prop::collection::vec((any::<prop::sample::Index>(), 1u64..3), n).prop_map(|v| {
                    let mut out = Vec::new();
                    let mut rounds: Vec<Round> = vec![0];
                    for (i, (idx, step)) in v.into_iter().enumerate() {
                        let parent = idx.index(i + 1);
                        let r = rounds[parent] + step;
                        rounds.push(r);
                        out.push((parent, r));
                    }
                    out
                }),
                prop::collection::vec(any::<bool>(), n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
    }

    proptest! {
        #[test]
        fn incremental_commit_matches_full_scan((shape, certified, order) in arb_tree()) {
            let mut tree = BlockTree::new(4);
            let mut blocks: Vec<Block> = vec![Block::genesis()];
            for (i, (parent, round)) in shape.iter().enumerate() {
                let pq = if *parent == 0 { Block::genesis_qc(4) } else { qc_of(&blocks[*parent]) };
                let b = Block::new(*round, pq, vec![i as u8], AuthorId(1));
                tree.insert(b.clone()).unwrap();
                blocks.push(b);
            }
            // QCs: every block with a child is certified via the child's
            // parent_qc; leaves get one when the coin says so.
            let mut qcs: Vec<QuorumCert> = Vec::new();
            for &i in &order {
                let b = &blocks[i + 1];
                let has_child = shape.iter().any(|(p, _)| *p == i + 1);
                if has_child || certified[i] {
                    qcs.push(qc_of(b));
                }
            }
            let mut committed: BTreeSet<BlockId> = BTreeSet::new();
            for qc in &qcs {
                tree.record_qc(qc);
                if let Some(c) = check_commit(&tree, qc) {
                    committed.extend(tree.branch_until(c, |_| false));
                }
            }
            // Oracle: enumerate every certified triple in the tree.
            let qc_set: BTreeSet<BlockId> = qcs.iter().map(|q| q.block_id).collect();
            let mut expected: BTreeSet<BlockId> = BTreeSet::new();
            for x in &blocks[1..] {
                for y in &blocks[1..] {
                    for z in &blocks[1..] {
                        if y.parent_id() == Some(x.id)
                            && z.parent_id() == Some(y.id)
                            && y.round == x.round + 1
                            && z.round == y.round + 1
                            && qc_set.contains(&z.id)
                        {
                            let mut cur = Some(x.id);
                            while let Some(c) = cur {
                                if c == blocks[0].id { break; }
                                expected.insert(c);
                                cur = blocks.iter().find(|b| b.id == c).and_then(Block::parent_id);
                            }
                        }
                    }
                }
            }
            prop_assert_eq!(committed, expected);
        }
    }
}
