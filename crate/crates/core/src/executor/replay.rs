// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pinned attack schedules. Each replay drives one of the flawed machines
//! in `attacks` through a fixed sequence of phases and judges the outcome
//! with the same safety and liveness checks as generated runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::{ExecutionReport, Verdict};
use super::verdict::{check_liveness, check_safety, timely_honest_rounds, InstanceLog, LivenessCheck, SafetyDetail};
use crate::attacks::fab::{FabMsg, FabNode};
use crate::attacks::synchs::{SyncCluster, SyncHsNode, DELTA};
use crate::attacks::tendermint::{TendermintMsg, TendermintNode};
use crate::attacks::zyzzyva::{ZyzzyvaMsg, ZyzzyvaNode};
use crate::attacks::{Outbox, View};
use crate::consensus::default_quorum;
use crate::net::{
    AuthorId, EventLog, InstanceTable, MessageKind, NodeId, Partition, Phase, PhasedNetwork, Round, RoundSchedule,
    TimedDelivery, TimedNetwork, WireMessage,
};
use crate::protocol::CommitEntry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    Zyzzyva,
    Fab,
    Synchs,
    Tendermint,
}

impl AttackName {
    pub const ALL: [AttackName; 4] = [AttackName::Zyzzyva, AttackName::Fab, AttackName::Synchs, AttackName::Tendermint];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackName::Zyzzyva => "zyzzyva",
            AttackName::Fab => "fab",
            AttackName::Synchs => "synchs",
            AttackName::Tendermint => "tendermint",
        }
    }

    /// Verdict the schedule is built to produce.
    pub fn expected_verdict(self) -> &'static str {
        match self {
            AttackName::Zyzzyva | AttackName::Synchs => "safety_violation",
            AttackName::Fab | AttackName::Tendermint => "liveness_violation",
        }
    }
}

impl fmt::Display for AttackName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack `{0}` (expected zyzzyva, fab, synchs or tendermint)")]
pub struct UnknownAttack(pub String);

impl FromStr for AttackName {
    type Err = UnknownAttack;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackName::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| UnknownAttack(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct ReplayOutput {
    pub attack: AttackName,
    pub report: ExecutionReport,
    pub events: EventLog,
    /// Phase headers and node notes in the order they happened.
    pub trace: Vec<String>,
}

impl ReplayOutput {
    pub fn matches_expected(&self) -> bool {
        self.report.verdict.name() == self.attack.expected_verdict()
    }
}

pub fn replay_attack(attack: AttackName) -> ReplayOutput {
    match attack {
        AttackName::Zyzzyva => zyzzyva(),
        AttackName::Fab => fab(),
        AttackName::Synchs => synchs(),
        AttackName::Tendermint => tendermint(),
    }
}

/// Labels for a replay whose authors carry fixed names.
struct Names {
    table: InstanceTable,
    names: Vec<&'static str>,
}

impl Names {
    fn new(names: &[&'static str], targets: &[usize]) -> Self {
        let targets: Vec<AuthorId> = targets.iter().copied().map(AuthorId).collect();
        let table = InstanceTable::register(names.len(), &targets).expect("valid replay table");
        Self { table, names: names.to_vec() }
    }

    fn label(&self, node: NodeId) -> String {
        let base = self.names[self.table.author_of(node).0];
        if self.table.is_twin(node) {
            format!("{base}'")
        } else {
            base.to_string()
        }
    }

    /// Instances by label, e.g. `["D'", "G"]`.
    fn nodes(&self, labels: &[&str]) -> Vec<NodeId> {
        labels
            .iter()
            .map(|l| self.table.nodes().find(|n| self.label(*n) == *l).unwrap_or_else(|| panic!("no instance {l}")))
            .collect()
    }

    fn author(&self, name: &str) -> AuthorId {
        AuthorId(self.names.iter().position(|n| *n == name).unwrap_or_else(|| panic!("no author {name}")))
    }

    fn partition(&self, cells: &[&[&str]]) -> Partition {
        Partition::new(cells.iter().map(|c| self.nodes(c)).collect())
    }

    fn logs(&self, commits: impl Fn(NodeId) -> Vec<CommitEntry>) -> Vec<InstanceLog> {
        self.table
            .nodes()
            .map(|n| InstanceLog {
                label: self.label(n),
                // Every instance of a targeted author stands in for a
                // Byzantine node, so only untargeted authors are judged.
                honest: !self.table.is_target(self.table.author_of(n)),
                entries: commits(n),
            })
            .collect()
    }
}

/// Uniform face of the phase-driven machines.
trait Scripted {
    type Msg: WireMessage;
    fn start(&mut self) -> Outbox<Self::Msg>;
    fn enter_view(&mut self, view: View) -> Outbox<Self::Msg>;
    fn on_message(&mut self, from: AuthorId, msg: Self::Msg) -> Outbox<Self::Msg>;
    /// Fires when the network goes quiet; the leader's vote timer.
    fn on_quiet(&mut self) -> Outbox<Self::Msg> {
        Vec::new()
    }
    fn commits(&self) -> Vec<CommitEntry>;
    fn notes(&self) -> &[String];
}

impl Scripted for ZyzzyvaNode {
    type Msg = ZyzzyvaMsg;
    fn start(&mut self) -> Outbox<ZyzzyvaMsg> {
        ZyzzyvaNode::start(self)
    }
    fn enter_view(&mut self, view: View) -> Outbox<ZyzzyvaMsg> {
        ZyzzyvaNode::enter_view(self, view)
    }
    fn on_message(&mut self, from: AuthorId, msg: ZyzzyvaMsg) -> Outbox<ZyzzyvaMsg> {
        ZyzzyvaNode::on_message(self, from, msg)
    }
    fn on_quiet(&mut self) -> Outbox<ZyzzyvaMsg> {
        self.on_vote_timer()
    }
    fn commits(&self) -> Vec<CommitEntry> {
        ZyzzyvaNode::commits(self).to_vec()
    }
    fn notes(&self) -> &[String] {
        ZyzzyvaNode::notes(self)
    }
}

impl Scripted for FabNode {
    type Msg = FabMsg;
    fn start(&mut self) -> Outbox<FabMsg> {
        FabNode::start(self)
    }
    fn enter_view(&mut self, view: View) -> Outbox<FabMsg> {
        FabNode::enter_view(self, view)
    }
    fn on_message(&mut self, from: AuthorId, msg: FabMsg) -> Outbox<FabMsg> {
        FabNode::on_message(self, from, msg)
    }
    fn commits(&self) -> Vec<CommitEntry> {
        FabNode::commits(self).to_vec()
    }
    fn notes(&self) -> &[String] {
        FabNode::notes(self)
    }
}

impl Scripted for TendermintNode {
    type Msg = TendermintMsg;
    fn start(&mut self) -> Outbox<TendermintMsg> {
        TendermintNode::start(self)
    }
    fn enter_view(&mut self, view: View) -> Outbox<TendermintMsg> {
        TendermintNode::enter_view(self, view)
    }
    fn on_message(&mut self, from: AuthorId, msg: TendermintMsg) -> Outbox<TendermintMsg> {
        TendermintNode::on_message(self, from, msg)
    }
    fn commits(&self) -> Vec<CommitEntry> {
        TendermintNode::commits(self).to_vec()
    }
    fn notes(&self) -> &[String] {
        TendermintNode::notes(self)
    }
}

struct Script<N: Scripted> {
    names: Names,
    nodes: Vec<N>,
    net: PhasedNetwork<N::Msg>,
    trace: Vec<String>,
    read: Vec<usize>,
    sent: usize,
    /// Partition and leader that decide whether a view was timely.
    views: BTreeMap<View, (Partition, AuthorId)>,
}

impl<N: Scripted> Script<N> {
    fn new(names: Names, nodes: Vec<N>) -> Self {
        let net = PhasedNetwork::new(names.table.clone());
        let read = vec![0; nodes.len()];
        Self { names, nodes, net, trace: Vec::new(), read, sent: 0, views: BTreeMap::new() }
    }

    fn post(&mut self, src: NodeId, out: Outbox<N::Msg>) {
        for (to, msg) in out {
            self.sent += 1;
            self.net.send(src, &to, msg);
        }
    }

    fn start(&mut self) {
        for i in 0..self.nodes.len() {
            let out = self.nodes[i].start();
            self.post(NodeId(i), out);
        }
    }

    /// Drops everything in flight and moves every instance to `view`.
    fn enter_view(&mut self, view: View, timely: Partition, leader: &str) {
        self.net.flush();
        self.net.advance();
        self.trace.push(format!("-- view {view}"));
        self.views.insert(view, (timely, self.names.author(leader)));
        for i in 0..self.nodes.len() {
            let out = self.nodes[i].enter_view(view);
            self.post(NodeId(i), out);
        }
    }

    fn run(&mut self, phase: Phase) {
        self.trace.push(format!("phase {}", phase.label));
        loop {
            while let Some(env) = self.net.next(&phase) {
                let from = self.names.table.author_of(env.src);
                let out = self.nodes[env.dst.0].on_message(from, env.body);
                self.post(env.dst, out);
            }
            let mut fired = false;
            for i in 0..self.nodes.len() {
                let out = self.nodes[i].on_quiet();
                fired |= !out.is_empty();
                self.post(NodeId(i), out);
            }
            if !fired {
                break;
            }
        }
        self.collect_notes();
        self.net.advance();
    }

    fn collect_notes(&mut self) {
        for i in 0..self.nodes.len() {
            let notes = self.nodes[i].notes();
            for note in &notes[self.read[i]..] {
                self.trace.push(format!("[{}] {note}", self.names.label(NodeId(i))));
            }
            self.read[i] = notes.len();
        }
    }

    fn finish(mut self, attack: AttackName) -> ReplayOutput {
        self.net.flush();
        let logs = self.names.logs(|n| self.nodes[n.0].commits());
        let last_view = self.views.keys().copied().max().unwrap_or(1);
        let schedule = RoundSchedule {
            partitions: self.views.iter().map(|(v, (p, _))| (*v, p.clone())).collect(),
            leaders: self.views.iter().map(|(v, (_, l))| (*v, vec![*l])).collect(),
            allows: BTreeMap::new(),
        };
        let timely = timely_honest_rounds(&schedule, &self.names.table, default_quorum(self.names.table.num_nodes()), last_view);
        let liveness = check_liveness(&timely, &decisions_by_view(&logs), last_view, 0);
        for l in &logs {
            for e in &l.entries {
                self.trace.push(format!("[{}] committed {} in view {}", l.label, e.short_id(), e.round));
            }
        }
        let warnings = self.nodes.iter().map(|n| n.notes().len()).sum();
        let events = self.net.into_log();
        let report = judge(logs, liveness, None, self.sent, &events, last_view, warnings);
        ReplayOutput { attack, report, events, trace: self.trace }
    }
}

fn decisions_by_view(logs: &[InstanceLog]) -> BTreeMap<Round, usize> {
    let mut out = BTreeMap::new();
    for e in logs.iter().filter(|l| l.honest).flat_map(|l| &l.entries) {
        *out.entry(e.round).or_default() += 1;
    }
    out
}

fn judge(
    logs: Vec<InstanceLog>,
    liveness: LivenessCheck,
    extra: Option<SafetyDetail>,
    sent: usize,
    events: &EventLog,
    rounds: Round,
    warnings: usize,
) -> ExecutionReport {
    let verdict = match (check_safety(&logs, false), extra, &liveness) {
        (Err(detail), _, _) | (Ok(()), Some(detail), _) => Verdict::SafetyViolation { detail },
        (Ok(()), None, LivenessCheck::Violated { rounds }) => Verdict::LivenessViolation { rounds: rounds.clone() },
        _ => Verdict::Safe,
    };
    ExecutionReport {
        verdict,
        liveness,
        logs,
        messages_sent: sent,
        delivered: events.delivered(),
        dropped: events.dropped(),
        elapsed_rounds: rounds,
        ticks: events.records().iter().map(|r| r.tick).max().unwrap_or(0),
        warnings,
        trace_hash: events.trace_hash(),
    }
}

const PROPOSE_AND_VOTE: &[MessageKind] = &[MessageKind::Proposal, MessageKind::Vote];

fn leaders(names: &Names, order: &[(View, &str)]) -> BTreeMap<View, AuthorId> {
    order.iter().map(|(v, n)| (*v, names.author(n))).collect()
}

/// D equivocates v1/v2; E proposes v1 in view 3 on the strength of D's
/// view-1 certificate, undoing the view-2 fast-track commit of v2.
fn zyzzyva() -> ReplayOutput {
    let names = Names::new(&["D", "E", "F", "G"], &[0]);
    let lead = leaders(&names, &[(1, "D"), (2, "G"), (3, "E")]);
    let inputs = ["v1", "e", "f", "g", "v2"];
    let nodes = names.table.nodes().map(|n| ZyzzyvaNode::new(names.table.author_of(n), 4, inputs[n.0], lead.clone())).collect();
    let mut s = Script::new(names, nodes);

    let v1 = s.names.partition(&[&["D", "E", "F"], &["D'", "G"]]);
    s.views.insert(1, (v1.clone(), s.names.author("D")));
    s.trace.push("-- view 1".into());
    s.start();
    s.run(Phase::new("v1 split", v1).only(PROPOSE_AND_VOTE));
    s.run(Phase::new("v1 isolate D", s.names.partition(&[&["E", "F"], &["D'", "G"], &["D"]])));

    s.enter_view(2, s.names.partition(&[&["D'", "E", "G"], &["D", "F"]]), "G");
    s.run(Phase::new("v2 new-view", s.names.partition(&[&["D'", "E", "G"], &["D", "F"]])).only(&[MessageKind::Status]));
    s.run(Phase::new("v2 fast track", Partition::fully_connected(5)));

    let p = s.names.partition(&[&["D", "E", "F"], &["D'", "G"]]);
    s.enter_view(3, p.clone(), "E");
    s.run(Phase::new("v3", p));
    s.finish(AttackName::Zyzzyva)
}

/// A alone certifies D's v1 while C and D' hold v2; the next two leaders
/// see a progress certificate that vouches for nothing.
fn fab() -> ReplayOutput {
    let names = Names::new(&["A", "B", "C", "D"], &[3]);
    let lead = leaders(&names, &[(1, "D"), (2, "A"), (3, "C")]);
    let inputs = ["a", "b", "c", "v1", "v2"];
    let nodes = names.table.nodes().map(|n| FabNode::new(names.table.author_of(n), 4, inputs[n.0], lead.clone())).collect();
    let mut s = Script::new(names, nodes);

    let v1 = s.names.partition(&[&["A", "B", "D"], &["C", "D'"]]);
    s.views.insert(1, (v1.clone(), s.names.author("D")));
    s.trace.push("-- view 1".into());
    s.start();
    s.run(Phase::new("v1 propose", v1.clone()).only(&[MessageKind::Proposal]));
    let to_a = Phase::new("v1 votes reach A only", v1)
        .allow(&s.names.nodes(&["B", "D"]), &s.names.nodes(&["A"]))
        .allow(&s.names.nodes(&["C", "D'"]), &s.names.nodes(&["C", "D'"]));
    s.run(to_a);

    let p = s.names.partition(&[&["A", "C", "D'"], &["B", "D"]]);
    s.enter_view(2, p.clone(), "A");
    s.run(Phase::new("v2", p.clone()));
    s.enter_view(3, p.clone(), "C");
    s.run(Phase::new("v3", p));
    s.finish(AttackName::Fab)
}

/// QCs alternate between the {D,E} side and the {D',F} side, so each
/// honest leader's proposal is refused by the other side.
fn tendermint() -> ReplayOutput {
    let names = Names::new(&["D", "E", "F", "G"], &[0]);
    let lead = leaders(&names, &[(1, "D"), (2, "F"), (3, "E")]);
    let inputs = ["V1", "V3", "V4", "V5", "V2"];
    let nodes =
        names.table.nodes().map(|n| TendermintNode::new(names.table.author_of(n), 4, inputs[n.0], lead.clone())).collect();
    let mut s = Script::new(names, nodes);
    let isolate = s.names.partition(&[&["D", "E"], &["D'", "F"], &["G"]]);

    let v1 = s.names.partition(&[&["D", "E", "G"], &["D'", "F"]]);
    s.views.insert(1, (v1.clone(), s.names.author("D")));
    s.trace.push("-- view 1".into());
    s.start();
    s.run(Phase::new("v1 split", v1).only(PROPOSE_AND_VOTE));
    s.run(Phase::new("v1 qc to D,E", isolate.clone()));

    s.enter_view(2, Partition::fully_connected(5), "F");
    s.run(Phase::new("v2 open", Partition::fully_connected(5)).only(PROPOSE_AND_VOTE));
    s.run(Phase::new("v2 qc to D',F", isolate.clone()));

    let p = s.names.partition(&[&["D", "E", "G"], &["D'", "F"]]);
    s.enter_view(3, p.clone(), "E");
    s.run(Phase::new("v3 split", p).only(PROPOSE_AND_VOTE));
    s.run(Phase::new("v3 qc to D,E", isolate));
    s.finish(AttackName::Tendermint)
}

/// The force-locking schedule in half-Δ ticks. A's v1 reaches only B and
/// C; D, A' and B' blame at 3Δ and move on, B' proposes v1' on the stale
/// certificate, and D commits it at 6Δ after certifying v1 itself.
fn synchs() -> ReplayOutput {
    let names = Names::new(&["A", "B", "C", "D", "E"], &[0, 1]);
    let n = |l: &str| names.nodes(&[l])[0];
    let [a, b, c, d, a2, b2] = ["A", "B", "C", "D", "A'", "B'"].map(n);
    use MessageKind::{Blame, Proposal, Status, Vote};
    let rules = vec![
        // View 1: A hears from B and C at 1.5Δ and proposes v1.
        TimedDelivery::at(b, &[a], Status, 1, 3),
        TimedDelivery::at(c, &[a], Status, 1, 3),
        TimedDelivery::at(a, &[b, c], Proposal, 1, 5),
        // Votes on v1 reach C at 3.5Δ and D at 4.5Δ.
        TimedDelivery::at(a, &[c], Vote, 1, 7),
        TimedDelivery::at(b, &[c], Vote, 1, 7),
        TimedDelivery::at(c, &[d], Vote, 1, 7),
        TimedDelivery::at(a, &[d], Vote, 1, 9),
        TimedDelivery::at(b, &[d], Vote, 1, 9),
        // Blames at 3Δ: instantly among D, A', B'; at 4Δ to C.
        TimedDelivery::at(d, &[a2, b2], Blame, 1, 6),
        TimedDelivery::at(a2, &[d, b2], Blame, 1, 6),
        TimedDelivery::at(b2, &[d, a2], Blame, 1, 6),
        TimedDelivery::at(d, &[c], Blame, 1, 8),
        TimedDelivery::at(a2, &[c], Blame, 1, 8),
        TimedDelivery::at(b2, &[c], Blame, 1, 8),
        // View 2 at 4Δ: statuses to B', whose v1' reaches D at once.
        TimedDelivery::at(d, &[b2], Status, 2, 8),
        TimedDelivery::at(a2, &[b2], Status, 2, 8),
        TimedDelivery::at(b2, &[d], Proposal, 2, 8),
        // D's vote on v1' reaches C at 5Δ.
        TimedDelivery::at(d, &[c], Vote, 2, 10),
    ];
    let inputs = ["v1", "b", "c", "d", "e", "a'", "v1'"];
    let nodes = names.table.nodes().map(|i| SyncHsNode::new(names.table.author_of(i), 5, inputs[i.0], BTreeMap::new())).collect();
    let mut cluster = SyncCluster::new(names.table.clone(), TimedNetwork::new(rules, None), nodes);
    let horizon = 6 * DELTA;
    cluster.run(horizon).expect("scripted ticks are monotone");

    let mut trace = Vec::new();
    let mut timeline: Vec<(u64, usize, String)> = Vec::new();
    for (i, node) in cluster.nodes().iter().enumerate() {
        for (k, note) in node.notes().iter().enumerate() {
            let tick = note.strip_prefix("t=").and_then(|r| r.split(' ').next()).and_then(|t| t.parse().ok()).unwrap_or(0);
            timeline.push((tick, i * 1000 + k, format!("[{}] {note}", names.label(NodeId(i)))));
        }
    }
    timeline.sort();
    trace.extend(timeline.into_iter().map(|(_, _, line)| line));

    let logs = names.logs(|i| cluster.nodes()[i.0].commits().to_vec());
    let extra = uncertified_commit(&names, cluster.nodes());
    let warnings = cluster.nodes().iter().map(|n| n.notes().len()).sum();
    let view = cluster.nodes().iter().map(SyncHsNode::view).max().unwrap_or(1);
    let mut report =
        judge(logs, LivenessCheck::NotApplicable, extra, cluster.messages_sent(), cluster.log(), view, warnings);
    report.ticks = horizon;
    ReplayOutput { attack: AttackName::Synchs, report, events: cluster.log().clone(), trace }
}

/// The highest certificate any honest node holds is what the next leader
/// will extend. An honest commit it does not extend is doomed to be forked.
fn uncertified_commit(names: &Names, nodes: &[SyncHsNode]) -> Option<SafetyDetail> {
    let honest: Vec<(NodeId, &SyncHsNode)> = names
        .table
        .nodes()
        .filter(|n| !names.table.is_target(names.table.author_of(*n)))
        .map(|n| (n, &nodes[n.0]))
        .collect();
    let (_, holder) = honest.iter().max_by_key(|(n, node)| (node.highest_cc().view, std::cmp::Reverse(n.0)))?;
    let cc = holder.highest_cc();
    for (n, node) in &honest {
        for e in node.commits() {
            if !holder.extends(&cc.value, &e.id) {
                return Some(SafetyDetail::Uncertified {
                    instance: names.label(*n),
                    committed: e.id.clone(),
                    certified: cc.value.clone(),
                    view: cc.view,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in AttackName::ALL {
            assert_eq!(a.as_str().parse::<AttackName>().unwrap(), a);
        }
        assert!("paxos".parse::<AttackName>().is_err());
    }

    #[test]
    fn replays_are_deterministic() {
        for a in AttackName::ALL {
            let x = replay_attack(a);
            let y = replay_attack(a);
            assert_eq!(x.report, y.report, "{a}");
            assert_eq!(x.trace, y.trace, "{a}");
        }
    }
}
