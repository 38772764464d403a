// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::consensus::{default_quorum, LeaderSchedule};
use crate::net::{InstanceTable, Round, RoundSchedule};
use crate::protocol::CommitEntry;

/// Commit log of one instance, tagged for reporting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceLog {
    pub label: String,
    pub honest: bool,
    pub entries: Vec<CommitEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SafetyDetail {
    /// Two logs disagree at `position`.
    Divergence { left: String, right: String, position: usize, left_id: String, right_id: String },
    /// One instance committed two different blocks at one height.
    Rewrite { instance: String, height: u64, first: String, second: String },
    /// A commit that the highest certificate in the system does not extend;
    /// the next leader will build on the certificate and fork it away.
    Uncertified { instance: String, committed: String, certified: String, view: Round },
}

impl fmt::Display for SafetyDetail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SafetyDetail::Divergence { left, right, position, left_id, right_id } => write!(
                f,
                "{left} committed {} and {right} committed {} at position {position}",
                short(left_id),
                short(right_id)
            ),
            SafetyDetail::Rewrite { instance, height, first, second } => write!(
                f,
                "{instance} rewrote height {height}: {} replaced by {}",
                short(first),
                short(second)
            ),
            SafetyDetail::Uncertified { instance, committed, certified, view } => write!(
                f,
                "{instance} committed {} but the highest certificate, from view {view}, is for conflicting {}",
                short(committed),
                short(certified)
            ),
        }
    }
}

fn short(id: &str) -> &str {
    &id[..id.len().min(8)]
}

/// Pairwise position-by-position prefix check. Returns the first divergence.
pub fn is_safe(logs: &[InstanceLog]) -> Result<(), SafetyDetail> {
    for (i, a) in logs.iter().enumerate() {
        for b in &logs[i + 1..] {
            for (pos, (x, y)) in a.entries.iter().zip(&b.entries).enumerate() {
                if x.id != y.id {
                    return Err(SafetyDetail::Divergence {
                        left: a.label.clone(),
                        right: b.label.clone(),
                        position: pos,
                        left_id: x.id.clone(),
                        right_id: y.id.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A single log that revisits a height with another id has lost committed
/// history, even if every other log agrees with some prefix of it.
pub fn find_rewrite(logs: &[InstanceLog]) -> Option<SafetyDetail> {
    for log in logs {
        let mut seen: HashMap<u64, &str> = HashMap::new();
        for e in &log.entries {
            match seen.get(&e.height) {
                Some(first) if *first != e.id => {
                    return Some(SafetyDetail::Rewrite {
                        instance: log.label.clone(),
                        height: e.height,
                        first: first.to_string(),
                        second: e.id.clone(),
                    })
                }
                _ => {
                    seen.insert(e.height, &e.id);
                }
            }
        }
    }
    None
}

pub fn check_safety(logs: &[InstanceLog], include_twins: bool) -> Result<(), SafetyDetail> {
    let chosen: Vec<InstanceLog> = logs.iter().filter(|l| include_twins || l.honest).cloned().collect();
    if let Some(rewrite) = find_rewrite(&chosen) {
        return Err(rewrite);
    }
    is_safe(&chosen)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LivenessCheck {
    Holds,
    /// `rounds` are consecutive timely-honest rounds without a new decision.
    Violated { rounds: Vec<Round> },
    NotApplicable,
}

/// Rounds with a single leader that has no twin and whose cell holds a
/// quorum of distinct authors.
pub fn timely_honest_rounds(schedule: &RoundSchedule, table: &InstanceTable, quorum: usize, upto: Round) -> BTreeSet<Round> {
    let mut out = BTreeSet::new();
    let leader_schedule = LeaderSchedule(schedule.leaders.clone());
    for r in 1..=upto {
        let leaders = leader_schedule.leaders(r, table.num_nodes());
        let [leader] = leaders.as_slice() else { continue };
        if table.is_target(*leader) {
            continue;
        }
        let leader_node = table.instances_of(*leader)[0];
        let cell_authors: BTreeSet<_> = match schedule.partition_for(r) {
            Some(p) => {
                let cell = p.cell_of(leader_node).map(|c| p.cells()[c].clone()).unwrap_or_default();
                cell.iter().map(|n| table.author_of(*n)).collect()
            }
            None => table.nodes().map(|n| table.author_of(n)).collect(),
        };
        if cell_authors.len() >= quorum {
            out.insert(r);
        }
    }
    out
}

pub fn default_timely_rounds(schedule: &RoundSchedule, table: &InstanceTable, upto: Round) -> BTreeSet<Round> {
    timely_honest_rounds(schedule, table, default_quorum(table.num_nodes()), upto)
}

/// Violation iff some run of `2 + decision_lag` consecutive timely-honest
/// rounds, all completed, saw no new honest decision. `decision_lag` is the
/// number of extra rounds a protocol needs between a proposal and its
/// decision (0 for single-shot views, 3 for a 3-chain).
pub fn check_liveness(
    timely: &BTreeSet<Round>,
    decisions_by_round: &BTreeMap<Round, usize>,
    completed_rounds: Round,
    decision_lag: u64,
) -> LivenessCheck {
    let window = 2 + decision_lag;
    if timely.is_empty() {
        return LivenessCheck::NotApplicable;
    }
    for &start in timely {
        let rounds: Vec<Round> = (start..start + window).collect();
        if rounds.iter().all(|r| timely.contains(r) && *r <= completed_rounds)
            && rounds.iter().all(|r| decisions_by_round.get(r).copied().unwrap_or(0) == 0)
        {
            return LivenessCheck::Violated { rounds };
        }
    }
    LivenessCheck::Holds
}
