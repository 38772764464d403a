// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::consensus::{LeaderSchedule, MutationConfig};
use crate::net::{AuthorId, InstanceTable, NetError, NodeId, Partition, Round, RoundSchedule};

/// Reset an instance to fresh state the moment it enters `at_round`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restart {
    pub node: NodeId,
    pub at_round: Round,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub num_nodes: usize,
    pub target_nodes: Vec<AuthorId>,
    #[serde(with = "round_keys")]
    pub round_partitions: BTreeMap<Round, Partition>,
    #[serde(with = "round_keys")]
    pub round_leaders: BTreeMap<Round, Vec<AuthorId>>,
    #[serde(default)]
    pub mutation: MutationConfig,
    pub seed: u64,
    pub round_budget: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restarts: Vec<Restart>,
    /// Extra per-message delay drawn uniformly from `0..=delivery_jitter`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delivery_jitter: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

/// Round-keyed maps with the keys written as strings, so records survive
/// being flattened into other JSON objects.
mod round_keys {
    use serde::de::{Deserialize, Deserializer, Error};
    use serde::ser::{SerializeMap, Serializer};
    use serde::Serialize;
    use std::collections::BTreeMap;

    use crate::net::Round;

    pub fn serialize<S: Serializer, T: Serialize>(map: &BTreeMap<Round, T>, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            m.serialize_entry(&k.to_string(), v)?;
        }
        m.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<BTreeMap<Round, T>, D::Error> {
        let raw: BTreeMap<String, T> = BTreeMap::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<Round>().map(|r| (r, v)).map_err(|_| D::Error::custom(format!("bad round key {k:?}"))))
            .collect()
    }
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum TestCaseError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{targets} targets for {nodes} nodes")]
    TooManyTargets { targets: usize, nodes: usize },
    #[error("round budget must be positive")]
    ZeroBudget,
    #[error("restart names unknown node {0}")]
    UnknownRestart(NodeId),
}

impl TestCase {
    /// Same partition and leaders for every round.
    pub fn fixed(
        num_nodes: usize,
        target_nodes: Vec<AuthorId>,
        partition: Partition,
        leaders: Vec<AuthorId>,
        round_budget: u64,
        seed: u64,
    ) -> Self {
        Self {
            num_nodes,
            target_nodes,
            round_partitions: BTreeMap::from([(1, partition)]),
            round_leaders: BTreeMap::from([(1, leaders)]),
            mutation: MutationConfig::none(),
            seed,
            round_budget,
            restarts: Vec::new(),
            delivery_jitter: 0,
        }
    }

    pub fn instance_table(&self) -> Result<InstanceTable, NetError> {
        InstanceTable::register(self.num_nodes, &self.target_nodes)
    }

    pub fn schedule(&self) -> RoundSchedule {
        RoundSchedule {
            partitions: self.round_partitions.clone(),
            leaders: self.round_leaders.clone(),
            allows: BTreeMap::new(),
        }
    }

    pub fn leader_schedule(&self) -> LeaderSchedule {
        LeaderSchedule(self.round_leaders.clone())
    }

    pub fn validate(&self) -> Result<InstanceTable, TestCaseError> {
        if self.target_nodes.len() > self.num_nodes {
            return Err(TestCaseError::TooManyTargets { targets: self.target_nodes.len(), nodes: self.num_nodes });
        }
        if self.round_budget == 0 {
            return Err(TestCaseError::ZeroBudget);
        }
        let table = self.instance_table()?;
        self.schedule().validate(&table)?;
        if let Some(r) = self.restarts.iter().find(|r| r.node.0 >= table.len()) {
            return Err(TestCaseError::UnknownRestart(r.node));
        }
        Ok(table)
    }
}
