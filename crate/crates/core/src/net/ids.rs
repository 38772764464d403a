// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::fmt;

use super::NetError;

/// Simulator endpoint. Unique per running instance; a twin and its
/// original never share one.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

/// Signing identity. A twin carries the same `AuthorId` as its original.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for AuthorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0 as u8) as char)
        } else {
            write!(f, "N{}", self.0)
        }
    }
}

/// Maps every instance to its author.
///
/// Nodes occupy `NodeId(0..num_nodes)` with `AuthorId(i)` for node `i`.
/// Twins follow in target order, so the twin of the `k`-th target is
/// `NodeId(num_nodes + k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceTable {
    num_nodes: usize,
    authors: Vec<AuthorId>,
    instances: Vec<Vec<NodeId>>,
}

impl InstanceTable {
    pub fn register(num_nodes: usize, targets: &[AuthorId]) -> Result<Self, NetError> {
        let mut authors: Vec<AuthorId> = (0..num_nodes).map(AuthorId).collect();
        let mut instances: Vec<Vec<NodeId>> = (0..num_nodes).map(|i| vec![NodeId(i)]).collect();
        for (k, &target) in targets.iter().enumerate() {
            if target.0 >= num_nodes {
                return Err(NetError::UnknownAuthor(target));
            }
            if targets[..k].contains(&target) {
                return Err(NetError::DuplicateTarget(target));
            }
            let twin = NodeId(num_nodes + k);
            authors.push(target);
            instances[target.0].push(twin);
        }
        Ok(Self { num_nodes, authors, instances })
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_twins(&self) -> usize {
        self.authors.len() - self.num_nodes
    }

    pub fn author_of(&self, node: NodeId) -> AuthorId {
        self.authors[node.0]
    }

    /// All instances sharing `author`'s identity, original first.
    pub fn instances_of(&self, author: AuthorId) -> &[NodeId] {
        &self.instances[author.0]
    }

    pub fn is_twin(&self, node: NodeId) -> bool {
        node.0 >= self.num_nodes
    }

    /// Authors that have a twin.
    pub fn targets(&self) -> Vec<AuthorId> {
        self.authors[self.num_nodes..].to_vec()
    }

    pub fn is_target(&self, author: AuthorId) -> bool {
        self.instances[author.0].len() > 1
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.authors.len()).map(NodeId)
    }

    /// Display label: `A` for an original, `A'` for its twin.
    pub fn label(&self, node: NodeId) -> String {
        let author = self.author_of(node);
        if self.is_twin(node) {
            format!("{author}'")
        } else {
            author.to_string()
        }
    }
}
