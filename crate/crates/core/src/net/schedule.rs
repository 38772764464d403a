// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{AuthorId, InstanceTable, NetError, NodeId};

pub type Round = u64;

/// Disjoint communication cells covering every instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    cells: Vec<Vec<NodeId>>,
}

impl Partition {
    /// Cells are kept in canonical form: each cell sorted, cells ordered by
    /// their least member.
    pub fn new(cells: Vec<Vec<NodeId>>) -> Self {
        let mut cells: Vec<Vec<NodeId>> = cells
            .into_iter()
            .map(|mut c| {
                c.sort();
                c.dedup();
                c
            })
            .filter(|c| !c.is_empty())
            .collect();
        cells.sort();
        Self { cells }
    }

    pub fn fully_connected(instances: usize) -> Self {
        Self::new(vec![(0..instances).map(NodeId).collect()])
    }

    pub fn cells(&self) -> &[Vec<NodeId>] {
        &self.cells
    }

    pub fn cell_of(&self, node: NodeId) -> Option<usize> {
        self.cells.iter().position(|c| c.binary_search(&node).is_ok())
    }

    pub fn connected(&self, a: NodeId, b: NodeId) -> bool {
        match (self.cell_of(a), self.cell_of(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    pub fn validate(&self, instances: usize) -> Result<(), NetError> {
        let mut seen = vec![false; instances];
        for node in self.cells.iter().flatten() {
            match seen.get_mut(node.0) {
                None => return Err(NetError::UnknownNode(*node)),
                Some(true) => return Err(NetError::OverlappingCells(*node)),
                Some(slot) => *slot = true,
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(NetError::UncoveredNode(NodeId(missing)));
        }
        Ok(())
    }
}

/// Within a round that carries allows, only `from -> to` directions listed
/// here get through (on top of the partition check).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedAllow {
    pub from: Vec<NodeId>,
    pub to: Vec<NodeId>,
}

impl DirectedAllow {
    pub fn new(from: Vec<NodeId>, to: Vec<NodeId>) -> Self {
        Self { from, to }
    }

    fn permits(&self, src: NodeId, dst: NodeId) -> bool {
        self.from.contains(&src) && self.to.contains(&dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Partitioned,
    DirectionBlocked,
    Timed,
    Crashed,
    Flushed,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropReason::Partitioned => "partitioned",
            DropReason::DirectionBlocked => "direction_blocked",
            DropReason::Timed => "timed",
            DropReason::Crashed => "crashed",
            DropReason::Flushed => "flushed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RouteDecision {
    Deliver,
    Drop(DropReason),
}

/// Per-round partitions, leaders and directional rules.
///
/// A round without its own entry uses the closest configured round below it,
/// or the lowest configured round when none is below.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub partitions: BTreeMap<Round, Partition>,
    pub leaders: BTreeMap<Round, Vec<AuthorId>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub allows: BTreeMap<Round, Vec<DirectedAllow>>,
}

fn inherited<T>(map: &BTreeMap<Round, T>, round: Round) -> Option<&T> {
    map.range(..=round)
        .next_back()
        .or_else(|| map.iter().next())
        .map(|(_, v)| v)
}

impl RoundSchedule {
    pub fn partition_for(&self, round: Round) -> Option<&Partition> {
        inherited(&self.partitions, round)
    }

    pub fn leaders_for(&self, round: Round) -> &[AuthorId] {
        inherited(&self.leaders, round).map_or(&[], Vec::as_slice)
    }

    pub fn allows_for(&self, round: Round) -> Option<&[DirectedAllow]> {
        // Allows do not inherit: they describe one round only.
        self.allows.get(&round).map(Vec::as_slice)
    }

    /// Highest round that has any explicit configuration.
    pub fn last_configured_round(&self) -> Round {
        let p = self.partitions.keys().next_back().copied().unwrap_or(0);
        let l = self.leaders.keys().next_back().copied().unwrap_or(0);
        p.max(l)
    }

    pub fn route(&self, src: NodeId, dst: NodeId, round: Round) -> RouteDecision {
        if src == dst {
            return RouteDecision::Deliver;
        }
        if let Some(partition) = self.partition_for(round) {
            if !partition.connected(src, dst) {
                return RouteDecision::Drop(DropReason::Partitioned);
            }
        }
        if let Some(allows) = self.allows_for(round) {
            if !allows.iter().any(|a| a.permits(src, dst)) {
                return RouteDecision::Drop(DropReason::DirectionBlocked);
            }
        }
        RouteDecision::Deliver
    }

    pub fn validate(&self, table: &InstanceTable) -> Result<(), NetError> {
        for partition in self.partitions.values() {
            partition.validate(table.len())?;
        }
        for leader in self.leaders.values().flatten() {
            if leader.0 >= table.num_nodes() {
                return Err(NetError::UnknownAuthor(*leader));
            }
        }
        for allow in self.allows.values().flatten() {
            for node in allow.from.iter().chain(&allow.to) {
                if node.0 >= table.len() {
                    return Err(NetError::UnknownNode(*node));
                }
            }
        }
        Ok(())
    }
}
