// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenError, LeaderPartitionPair};
use crate::net::{AuthorId, InstanceTable, Partition};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ArrangeMode {
    /// One pair for all rounds.
    Static,
    PermuteWithoutReplacement,
    PermuteWithReplacement,
    /// `sample_size` testcases, each round's pair drawn independently.
    RandomPerRound { sample_size: usize },
}

impl ArrangeMode {
    pub fn name(&self) -> &'static str {
        match self {
            ArrangeMode::Static => "static",
            ArrangeMode::PermuteWithoutReplacement => "without_replacement",
            ArrangeMode::PermuteWithReplacement => "with_replacement",
            ArrangeMode::RandomPerRound { .. } => "random_per_round",
        }
    }
}

/// Step 2: every scenario paired with every allowed leader, scenario-major.
pub fn attach_leaders(scenarios: &[Partition], leaders: &[AuthorId]) -> Result<Vec<LeaderPartitionPair>, GenError> {
    if leaders.is_empty() {
        return Err(GenError::NoLeaders);
    }
    Ok(scenarios
        .iter()
        .flat_map(|s| leaders.iter().map(move |l| LeaderPartitionPair { leader: *l, scenario: s.clone() }))
        .collect())
}

/// Lazily yields pair-index sequences of length `rounds` (length 1 for
/// static mode) in lexicographic order.
pub struct Arrangements {
    mode: ArrangeMode,
    pairs: usize,
    rounds: usize,
    state: Option<Vec<usize>>,
    rng: ChaCha8Rng,
    drawn: usize,
}

impl Arrangements {
    pub fn new(mode: ArrangeMode, pairs: usize, rounds: usize, seed: u64) -> Result<Self, GenError> {
        if rounds == 0 {
            return Err(GenError::ZeroRounds);
        }
        let state = match mode {
            ArrangeMode::Static => (pairs > 0).then(|| vec![0]),
            ArrangeMode::PermuteWithoutReplacement => {
                if pairs < rounds {
                    return Err(GenError::NotEnoughPairs { pairs, rounds });
                }
                Some((0..rounds).collect())
            }
            ArrangeMode::PermuteWithReplacement => (pairs > 0).then(|| vec![0; rounds]),
            ArrangeMode::RandomPerRound { .. } => None,
        };
        Ok(Self { mode, pairs, rounds, state, rng: ChaCha8Rng::seed_from_u64(seed), drawn: 0 })
    }

    fn step(&mut self) {
        let Some(cur) = self.state.as_mut() else { return };
        let pairs = self.pairs;
        let advanced = match self.mode {
            ArrangeMode::Static => {
                cur[0] += 1;
                cur[0] < pairs
            }
            ArrangeMode::PermuteWithReplacement => {
                let mut i = cur.len();
                loop {
                    if i == 0 {
                        break false;
                    }
                    i -= 1;
                    cur[i] += 1;
                    if cur[i] < pairs {
                        break true;
                    }
                    cur[i] = 0;
                }
            }
            ArrangeMode::PermuteWithoutReplacement => next_k_permutation(cur, pairs),
            ArrangeMode::RandomPerRound { .. } => false,
        };
        if !advanced {
            self.state = None;
        }
    }
}

/// Next k-permutation of `0..n` in lexicographic order.
fn next_k_permutation(cur: &mut [usize], n: usize) -> bool {
    let k = cur.len();
    for i in (0..k).rev() {
        let used: Vec<bool> = {
            let mut u = vec![false; n];
            for &v in &cur[..i] {
                u[v] = true;
            }
            u
        };
        if let Some(v) = (cur[i] + 1..n).find(|v| !used[*v]) {
            cur[i] = v;
            let mut used = used;
            used[v] = true;
            let mut free = (0..n).filter(|x| !used[*x]);
            for slot in cur[i + 1..].iter_mut() {
                *slot = free.next().expect("n >= k leaves enough values");
            }
            return true;
        }
    }
    false
}

impl Iterator for Arrangements {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if let ArrangeMode::RandomPerRound { sample_size } = self.mode {
            if self.drawn >= sample_size || self.pairs == 0 {
                return None;
            }
            self.drawn += 1;
            let pairs = self.pairs;
            return Some((0..self.rounds).map(|_| self.rng.gen_range(0..pairs)).collect());
        }
        let out = self.state.clone()?;
        self.step();
        Some(out)
    }
}

/// `count` random arrangements honouring the mode's shape.
pub fn sample_arrangements(mode: &ArrangeMode, pairs: usize, rounds: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if pairs == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|_| match mode {
            ArrangeMode::Static => vec![rng.gen_range(0..pairs)],
            ArrangeMode::PermuteWithoutReplacement => sample(&mut rng, pairs, rounds.min(pairs)).into_vec(),
            _ => (0..rounds).map(|_| rng.gen_range(0..pairs)).collect(),
        })
        .collect()
}

/// Liveness post-filter: the last configured round gives some leader
/// instance a cell with a quorum of distinct authors.
pub fn has_eventual_quorum(tc: &crate::executor::TestCase, table: &InstanceTable, quorum: usize) -> bool {
    let schedule = tc.schedule();
    let last = schedule.last_configured_round();
    let partition = schedule.partition_for(last);
    schedule.leaders_for(last).iter().any(|leader| {
        table.instances_of(*leader).iter().any(|inst| {
            let authors: std::collections::BTreeSet<_> = match partition {
                Some(p) => p
                    .cell_of(*inst)
                    .map(|c| p.cells()[c].iter().map(|n| table.author_of(*n)).collect())
                    .unwrap_or_default(),
                None => table.nodes().map(|n| table.author_of(n)).collect(),
            };
            authors.len() >= quorum
        })
    })
}
