// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Testcase enumeration: partitions, leader pairing, arrangement over rounds.

mod arrange;
mod offline;
mod partitions;
mod stats;

pub use arrange::{attach_leaders, has_eventual_quorum, sample_arrangements, ArrangeMode, Arrangements};
pub use offline::{read_offline, write_offline, OfflineRecord};
pub use partitions::{enumerate_partitions, stirling2, PartitionIter};
pub use stats::{approx, dry_run_stats, falling_factorial, DryRunStats};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::consensus::{default_quorum, MutationConfig};
use crate::executor::{instance_seed, TestCase};
use crate::net::{AuthorId, InstanceTable, NodeId, Partition};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("{parts} partitions is out of range for {instances} instances")]
    PartitionsOutOfRange { parts: usize, instances: usize },
    #[error("no leader candidates")]
    NoLeaders,
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("{pairs} pairs cannot fill {rounds} rounds without replacement")]
    NotEnoughPairs { pairs: usize, rounds: usize },
    #[error("{twins} twins for {nodes} nodes")]
    TooManyTwins { twins: usize, nodes: usize },
    #[error("shard index {index} out of range for {count} shards")]
    ShardOutOfRange { index: usize, count: usize },
    #[error("offline file: {0}")]
    Offline(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderPartitionPair {
    pub leader: AuthorId,
    pub scenario: Partition,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderPool {
    /// Only authors that have a twin may lead.
    #[default]
    Targets,
    AllAuthors,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "filter", rename_all = "snake_case")]
pub enum StageFilter {
    #[default]
    All,
    First { count: usize },
    Random { count: usize },
}

impl StageFilter {
    pub fn limit(&self) -> Option<usize> {
        match self {
            StageFilter::All => None,
            StageFilter::First { count } | StageFilter::Random { count } => Some(*count),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_nodes: usize,
    /// Twins go to the first `num_twins` authors.
    pub num_twins: usize,
    pub partitions: usize,
    pub rounds: usize,
    pub mode: ArrangeMode,
    #[serde(default)]
    pub leader_pool: LeaderPool,
    #[serde(default)]
    pub filter_step2: StageFilter,
    #[serde(default)]
    pub filter_step3: StageFilter,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mutation: MutationConfig,
    /// Keep only testcases whose final round lets a leader reach a quorum.
    #[serde(default)]
    pub require_eventual_quorum: bool,
}

impl GeneratorConfig {
    pub fn new(num_nodes: usize, num_twins: usize, partitions: usize, rounds: usize) -> Self {
        Self {
            num_nodes,
            num_twins,
            partitions,
            rounds,
            mode: ArrangeMode::Static,
            leader_pool: LeaderPool::Targets,
            filter_step2: StageFilter::All,
            filter_step3: StageFilter::All,
            seed: 0,
            mutation: MutationConfig::none(),
            require_eventual_quorum: false,
        }
    }

    pub fn targets(&self) -> Vec<AuthorId> {
        (0..self.num_twins).map(AuthorId).collect()
    }

    pub fn instances(&self) -> usize {
        self.num_nodes + self.num_twins
    }

    pub fn check(&self) -> Result<(), GenError> {
        if self.num_twins > self.num_nodes {
            return Err(GenError::TooManyTwins { twins: self.num_twins, nodes: self.num_nodes });
        }
        if self.rounds == 0 {
            return Err(GenError::ZeroRounds);
        }
        if self.partitions == 0 || self.partitions > self.instances() {
            return Err(GenError::PartitionsOutOfRange { parts: self.partitions, instances: self.instances() });
        }
        Ok(())
    }

    fn leader_candidates(&self) -> Vec<AuthorId> {
        match self.leader_pool {
            LeaderPool::Targets => self.targets(),
            LeaderPool::AllAuthors => (0..self.num_nodes).map(AuthorId).collect(),
        }
    }

    /// Steps 1 and 2, with the step-2 filter applied.
    pub fn pairs(&self) -> Result<Vec<LeaderPartitionPair>, GenError> {
        self.check()?;
        let scenarios: Vec<Partition> = enumerate_partitions(self.instances(), self.partitions)?.collect();
        let mut pairs = attach_leaders(&scenarios, &self.leader_candidates())?;
        match self.filter_step2 {
            StageFilter::All => {}
            StageFilter::First { count } => pairs.truncate(count),
            StageFilter::Random { count } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed ^ 0x53_5445_5032);
                let mut keep = rand::seq::index::sample(&mut rng, pairs.len(), count.min(pairs.len())).into_vec();
                keep.sort_unstable();
                pairs = keep.into_iter().map(|i| pairs[i].clone()).collect();
            }
        }
        Ok(pairs)
    }

    fn testcase(&self, pairs: &[LeaderPartitionPair], seq: &[usize], ordinal: u64) -> TestCase {
        let mut round_partitions = BTreeMap::new();
        let mut round_leaders = BTreeMap::new();
        for (i, &p) in seq.iter().enumerate() {
            round_partitions.insert(i as u64 + 1, pairs[p].scenario.clone());
            round_leaders.insert(i as u64 + 1, vec![pairs[p].leader]);
        }
        TestCase {
            num_nodes: self.num_nodes,
            target_nodes: self.targets(),
            round_partitions,
            round_leaders,
            mutation: self.mutation.clone(),
            seed: instance_seed(self.seed, NodeId(0), 0) ^ ordinal,
            round_budget: self.rounds as u64,
            restarts: Vec::new(),
            delivery_jitter: 0,
        }
    }
}

/// The full testcase stream for `cfg`, lazily.
pub fn generate(cfg: &GeneratorConfig) -> Result<Box<dyn Iterator<Item = OfflineRecord> + Send>, GenError> {
    let pairs = cfg.pairs()?;
    let seqs: Box<dyn Iterator<Item = Vec<usize>> + Send> = match cfg.filter_step3 {
        StageFilter::Random { count } => {
            Box::new(sample_arrangements(&cfg.mode, pairs.len(), cfg.rounds, count, cfg.seed).into_iter())
        }
        StageFilter::First { count } => Box::new(Arrangements::new(cfg.mode.clone(), pairs.len(), cfg.rounds, cfg.seed)?.take(count)),
        StageFilter::All => Box::new(Arrangements::new(cfg.mode.clone(), pairs.len(), cfg.rounds, cfg.seed)?),
    };
    let cfg = cfg.clone();
    let table = InstanceTable::register(cfg.num_nodes, &cfg.targets()).expect("checked config");
    let quorum = cfg.mutation.quorum_size_override.unwrap_or_else(|| default_quorum(cfg.num_nodes));
    let mode = cfg.mode.name().to_string();
    let require_quorum = cfg.require_eventual_quorum;
    Ok(Box::new(
        seqs.enumerate()
            .map(move |(i, seq)| cfg.testcase(&pairs, &seq, i as u64))
            .filter(move |tc| !require_quorum || has_eventual_quorum(tc, &table, quorum))
            .enumerate()
            .map(move |(i, tc)| OfflineRecord { ordinal: i as u64, mode: mode.clone(), testcase: tc }),
    ))
}

/// Round-robin shard by ordinal.
pub fn shard<I: Iterator>(stream: I, count: usize, index: usize) -> Result<impl Iterator<Item = I::Item>, GenError> {
    if count == 0 || index >= count {
        return Err(GenError::ShardOutOfRange { index, count });
    }
    Ok(stream.enumerate().filter(move |(i, _)| i % count == index).map(|(_, x)| x))
}
