// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Preliminary Sync HotStuff, one slot, `n = 2f+1`. Time is counted in
//! half-Δ ticks. A vote relays the proposal it votes for. A node commits
//! when its 2Δ commit timer runs out with no blame and no equivocation
//! seen in the view. `f+1` blames make a node quit the view and enter the
//! next one Δ later; the next leader proposes once `f+1` statuses arrive.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{sync_faults, AttackError, Outbox, View};
use crate::net::{
    AuthorId, DropReason, Envelope, EventLog, EventQueue, EventRecord, InstanceTable, LogDecision, MessageKind,
    NodeId, Recipient, Round, Tick, TimedNetwork, WireMessage,
};
use crate::protocol::CommitEntry;

/// Ticks per Δ.
pub const DELTA: Tick = 2;
pub const BLAME_AFTER: Tick = 3 * DELTA;
pub const COMMIT_AFTER: Tick = 2 * DELTA;
pub const GENESIS: &str = "v0";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cert {
    pub value: String,
    pub view: View,
    pub voters: BTreeSet<AuthorId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncMsg {
    Status { view: View, cc: Cert },
    Propose { view: View, value: String, parent: String },
    Vote { view: View, value: String, parent: String },
    Blame { view: View },
    /// `f+1` blames forwarded by a node quitting the view.
    BlameCert { view: View, blamers: BTreeSet<AuthorId> },
}

impl WireMessage for SyncMsg {
    fn kind(&self) -> MessageKind {
        match self {
            SyncMsg::Status { .. } => MessageKind::Status,
            SyncMsg::Propose { .. } => MessageKind::Proposal,
            SyncMsg::Vote { .. } => MessageKind::Vote,
            SyncMsg::Blame { .. } | SyncMsg::BlameCert { .. } => MessageKind::Blame,
        }
    }

    fn round(&self) -> Round {
        match self {
            SyncMsg::Status { view, .. }
            | SyncMsg::Propose { view, .. }
            | SyncMsg::Vote { view, .. }
            | SyncMsg::Blame { view }
            | SyncMsg::BlameCert { view, .. } => *view,
        }
    }

    fn summary(&self) -> String {
        match self {
            SyncMsg::Status { view, cc } => format!("status v{view} cc({})", cc.value),
            SyncMsg::Propose { view, value, parent } => format!("propose {value}<-{parent} v{view}"),
            SyncMsg::Vote { view, value, .. } => format!("vote {value} v{view}"),
            SyncMsg::Blame { view } => format!("blame v{view}"),
            SyncMsg::BlameCert { view, blamers } => format!("blame-cert v{view} x{}", blamers.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Blame(View),
    EnterView(View),
    Commit(View),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SyncEvent {
    Start,
    Message { from: AuthorId, msg: SyncMsg },
    Timer(Timer),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Step {
    pub sends: Outbox<SyncMsg>,
    pub timers: Vec<(Tick, Timer)>,
}

#[derive(Clone, Debug)]
pub struct SyncHsNode {
    author: AuthorId,
    n: usize,
    f: usize,
    input: String,
    leaders: BTreeMap<View, AuthorId>,
    clock: Tick,
    view: View,
    in_view: bool,
    parents: BTreeMap<String, String>,
    highest_cc: Cert,
    votes: BTreeMap<String, (View, BTreeSet<AuthorId>)>,
    blames: BTreeMap<View, BTreeSet<AuthorId>>,
    statuses: BTreeMap<View, BTreeMap<AuthorId, Cert>>,
    seen: BTreeMap<View, String>,
    equivocated: BTreeSet<View>,
    voted: BTreeSet<View>,
    proposed: BTreeSet<View>,
    blamed: BTreeSet<View>,
    pending_commit: Option<(View, String)>,
    commits: Vec<CommitEntry>,
    notes: Vec<String>,
}

impl SyncHsNode {
    pub fn new(author: AuthorId, n: usize, input: &str, leaders: BTreeMap<View, AuthorId>) -> Self {
        Self {
            author,
            n,
            f: sync_faults(n),
            input: input.to_string(),
            leaders,
            clock: 0,
            view: 0,
            in_view: false,
            parents: BTreeMap::new(),
            highest_cc: Cert { value: GENESIS.into(), view: 0, voters: (0..n).map(AuthorId).collect() },
            votes: BTreeMap::new(),
            blames: BTreeMap::new(),
            statuses: BTreeMap::new(),
            seen: BTreeMap::new(),
            equivocated: BTreeSet::new(),
            voted: BTreeSet::new(),
            proposed: BTreeSet::new(),
            blamed: BTreeSet::new(),
            pending_commit: None,
            commits: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn leader(&self, view: View) -> AuthorId {
        self.leaders.get(&view).copied().unwrap_or(AuthorId((view as usize).saturating_sub(1) % self.n))
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn highest_cc(&self) -> &Cert {
        &self.highest_cc
    }

    pub fn commits(&self) -> &[CommitEntry] {
        &self.commits
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// True if `value` is `ancestor` or descends from it.
    pub fn extends(&self, value: &str, ancestor: &str) -> bool {
        let mut cur = Some(value);
        while let Some(v) = cur {
            if v == ancestor {
                return true;
            }
            cur = self.parents.get(v).map(String::as_str);
        }
        false
    }

    /// Events must arrive in non-decreasing tick order.
    pub fn step(&mut self, event: SyncEvent, now: Tick) -> Result<Step, AttackError> {
        if now < self.clock {
            return Err(AttackError::OutOfOrder { event: now, now: self.clock });
        }
        self.clock = now;
        let mut step = Step::default();
        match event {
            SyncEvent::Start => self.enter(1, &mut step),
            SyncEvent::Timer(t) => self.on_timer(t, &mut step),
            SyncEvent::Message { from, msg } => self.on_message(from, msg, &mut step),
        }
        Ok(step)
    }

    fn note(&mut self, text: String) {
        self.notes.push(format!("t={} {text}", self.clock));
    }

    fn enter(&mut self, view: View, step: &mut Step) {
        self.view = view;
        self.in_view = true;
        self.note(format!("enters view {view}"));
        let cc = self.highest_cc.clone();
        step.sends.push((Recipient::Author(self.leader(view)), SyncMsg::Status { view, cc }));
        step.timers.push((self.clock + BLAME_AFTER, Timer::Blame(view)));
    }

    fn on_timer(&mut self, timer: Timer, step: &mut Step) {
        match timer {
            Timer::Blame(view) => {
                if view == self.view && self.in_view && !self.seen.contains_key(&view) && self.blamed.insert(view) {
                    self.note(format!("blames {} for silence in view {view}", self.leader(view)));
                    step.sends.push((Recipient::Broadcast, SyncMsg::Blame { view }));
                }
            }
            Timer::EnterView(view) => {
                if view > self.view {
                    self.enter(view, step);
                }
            }
            Timer::Commit(view) => {
                let Some((w, value)) = self.pending_commit.clone() else { return };
                let clean = self.blames.get(&w).is_none_or(BTreeSet::is_empty) && !self.equivocated.contains(&w);
                if w == view && view == self.view && self.in_view && clean {
                    self.pending_commit = None;
                    self.commit(&value, view);
                }
            }
        }
    }

    fn on_message(&mut self, from: AuthorId, msg: SyncMsg, step: &mut Step) {
        match msg {
            SyncMsg::Status { view, cc } => {
                if view != self.view || !self.in_view || self.leader(view) != self.author || self.proposed.contains(&view) {
                    return;
                }
                let held = self.statuses.entry(view).or_default();
                held.insert(from, cc);
                if held.len() < self.f + 1 {
                    return;
                }
                let best = held.values().chain(std::iter::once(&self.highest_cc)).max_by_key(|c| c.view).cloned();
                let parent = best.map_or_else(|| GENESIS.to_string(), |c| c.value);
                let value = self.input.clone();
                self.proposed.insert(view);
                self.parents.insert(value.clone(), parent.clone());
                self.note(format!("proposes {value} extending {parent}"));
                step.sends.push((Recipient::Broadcast, SyncMsg::Propose { view, value, parent }));
            }
            SyncMsg::Propose { view, value, parent } => {
                if from == self.leader(view) {
                    self.on_proposal(view, value, parent, step);
                }
            }
            SyncMsg::Vote { view, value, parent } => {
                self.parents.entry(value.clone()).or_insert_with(|| parent.clone());
                let (_, voters) = self.votes.entry(value.clone()).or_insert_with(|| (view, BTreeSet::new()));
                voters.insert(from);
                if voters.len() == self.f + 1 {
                    let cc = Cert { value: value.clone(), view, voters: voters.clone() };
                    self.note(format!("certifies {value} from view {view}"));
                    if cc.view >= self.highest_cc.view {
                        self.highest_cc = cc;
                    }
                }
                self.on_proposal(view, value, parent, step);
            }
            SyncMsg::Blame { view } => {
                self.blames.entry(view).or_default().insert(from);
                self.maybe_quit(view, step);
            }
            SyncMsg::BlameCert { view, blamers } => {
                if blamers.len() > self.f {
                    self.blames.entry(view).or_default().extend(blamers);
                    self.maybe_quit(view, step);
                }
            }
        }
    }

    fn on_proposal(&mut self, view: View, value: String, parent: String, step: &mut Step) {
        if view != self.view || !self.in_view {
            return;
        }
        self.parents.entry(value.clone()).or_insert(parent);
        match self.seen.get(&view) {
            Some(first) if *first != value => {
                if self.equivocated.insert(view) {
                    self.note(format!("sees equivocation in view {view}"));
                    if self.blamed.insert(view) {
                        step.sends.push((Recipient::Broadcast, SyncMsg::Blame { view }));
                    }
                }
                return;
            }
            Some(_) => {}
            None => {
                self.seen.insert(view, value.clone());
            }
        }
        if self.voted.contains(&view) {
            return;
        }
        if !self.extends(&value, &self.highest_cc.value) {
            let held = self.highest_cc.value.clone();
            self.note(format!("does not vote for {value}: it does not extend cc({held})"));
            self.voted.insert(view);
            return;
        }
        self.voted.insert(view);
        self.note(format!("votes for {value}"));
        let parent = self.parents.get(&value).cloned().unwrap_or_else(|| GENESIS.to_string());
        step.sends.push((Recipient::Broadcast, SyncMsg::Vote { view, value: value.clone(), parent }));
        step.timers.push((self.clock + COMMIT_AFTER, Timer::Commit(view)));
        self.pending_commit = Some((view, value));
    }

    fn maybe_quit(&mut self, view: View, step: &mut Step) {
        let count = self.blames.get(&view).map_or(0, BTreeSet::len);
        if view != self.view || !self.in_view || count <= self.f {
            return;
        }
        self.in_view = false;
        if self.pending_commit.as_ref().is_some_and(|(w, _)| *w == view) {
            self.pending_commit = None;
        }
        self.note(format!("quits view {view}"));
        let blamers = self.blames[&view].clone();
        step.sends.push((Recipient::Broadcast, SyncMsg::BlameCert { view, blamers }));
        step.timers.push((self.clock + DELTA, Timer::EnterView(view + 1)));
    }

    fn commit(&mut self, value: &str, view: View) {
        let mut chain = Vec::new();
        let mut cur = Some(value.to_string());
        while let Some(v) = cur {
            if v == GENESIS {
                break;
            }
            cur = self.parents.get(&v).cloned();
            chain.push(v);
        }
        chain.reverse();
        let base = self.commits.len();
        for (i, v) in chain.into_iter().enumerate().skip(base) {
            self.commits.push(CommitEntry { height: i as u64 + 1, round: view, id: v });
        }
        self.note(format!("commits {value}"));
    }
}

#[derive(Clone, Debug)]
enum Item {
    Event(SyncEvent),
    Deliver { src: NodeId, msg: SyncMsg },
}

/// Timed cluster: every instance runs a node; delivery times come from a
/// [`TimedNetwork`]. Timers sort before messages within a tick.
pub struct SyncCluster {
    table: InstanceTable,
    network: TimedNetwork,
    nodes: Vec<SyncHsNode>,
    queue: EventQueue<(NodeId, Item)>,
    log: EventLog,
    sent: usize,
}

impl SyncCluster {
    pub fn new(table: InstanceTable, network: TimedNetwork, nodes: Vec<SyncHsNode>) -> Self {
        assert_eq!(table.len(), nodes.len(), "one node per instance");
        Self { table, network, nodes, queue: EventQueue::new(), log: EventLog::new(), sent: 0 }
    }

    pub fn nodes(&self) -> &[SyncHsNode] {
        &self.nodes
    }

    pub fn table(&self) -> &InstanceTable {
        &self.table
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn messages_sent(&self) -> usize {
        self.sent
    }

    pub fn now(&self) -> Tick {
        self.queue.now()
    }

    fn timer_link(&self, node: NodeId) -> usize {
        node.0
    }

    fn message_link(&self, src: NodeId, dst: NodeId) -> usize {
        let n = self.table.len();
        n + src.0 * n + dst.0
    }

    /// Runs every event up to and including `horizon`.
    pub fn run(&mut self, horizon: Tick) -> Result<(), AttackError> {
        if self.queue.is_empty() && self.log.is_empty() {
            for node in self.table.nodes().collect::<Vec<_>>() {
                self.queue
                    .push(0, self.timer_link(node), (node, Item::Event(SyncEvent::Start)))
                    .map_err(|_| AttackError::OutOfOrder { event: 0, now: 0 })?;
            }
        }
        while self.queue.peek_tick().is_some_and(|t| t <= horizon) {
            let Some(next) = self.queue.pop() else { break };
            let now = next.tick;
            let (node, item) = next.item;
            let event = match item {
                Item::Event(e) => e,
                Item::Deliver { src, msg } => {
                    self.log.push(EventRecord {
                        tick: now,
                        src,
                        dst: node,
                        kind: msg.kind(),
                        round: msg.round(),
                        decision: LogDecision::Deliver,
                        summary: msg.summary(),
                    });
                    SyncEvent::Message { from: self.table.author_of(src), msg }
                }
            };
            let step = self.nodes[node.0].step(event, now)?;
            self.apply(node, step, now)?;
        }
        Ok(())
    }

    fn apply(&mut self, node: NodeId, step: Step, now: Tick) -> Result<(), AttackError> {
        let order = |e: crate::net::NetError| match e {
            crate::net::NetError::OutOfOrder { event, now } => AttackError::OutOfOrder { event, now },
            _ => AttackError::OutOfOrder { event: now, now },
        };
        for (at, timer) in step.timers {
            self.queue.push(at, self.timer_link(node), (node, Item::Event(SyncEvent::Timer(timer)))).map_err(order)?;
        }
        for (to, msg) in step.sends {
            self.sent += 1;
            for dst in self.table.fan_out(&to) {
                let env = Envelope::new(node, dst, msg.clone());
                match self.network.arrival(node, dst, env.kind, env.inferred_round, now) {
                    Some(at) => {
                        let link = self.message_link(node, dst);
                        self.queue.push(at, link, (dst, Item::Deliver { src: node, msg: msg.clone() })).map_err(order)?;
                    }
                    None => self.log.push(EventRecord {
                        tick: now,
                        src: node,
                        dst,
                        kind: env.kind,
                        round: env.inferred_round,
                        decision: LogDecision::Drop(DropReason::Timed),
                        summary: env.body.summary(),
                    }),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest_cluster(n: usize) -> SyncCluster {
        let table = InstanceTable::register(n, &[]).unwrap();
        let nodes = (0..n).map(|i| SyncHsNode::new(AuthorId(i), n, &format!("x{i}"), BTreeMap::new())).collect();
        SyncCluster::new(table, TimedNetwork::new(vec![], Some(1)), nodes)
    }

    #[test]
    fn silent_leader_is_blamed_after_three_deltas() {
        let mut node = SyncHsNode::new(AuthorId(1), 5, "x", BTreeMap::new());
        let step = node.step(SyncEvent::Start, 0).unwrap();
        assert_eq!(step.timers, vec![(6, Timer::Blame(1))]);
        let step = node.step(SyncEvent::Timer(Timer::Blame(1)), 6).unwrap();
        assert_eq!(step.sends, vec![(Recipient::Broadcast, SyncMsg::Blame { view: 1 })]);
    }

    #[test]
    fn quorum_of_blames_moves_view_one_delta_later() {
        let mut node = SyncHsNode::new(AuthorId(4), 5, "x", BTreeMap::new());
        node.step(SyncEvent::Start, 0).unwrap();
        // f+1 = 3 with n = 5.
        for a in 0..2 {
            let s = node.step(SyncEvent::Message { from: AuthorId(a), msg: SyncMsg::Blame { view: 1 } }, 7).unwrap();
            assert!(s.timers.is_empty());
        }
        let s = node.step(SyncEvent::Message { from: AuthorId(2), msg: SyncMsg::Blame { view: 1 } }, 7).unwrap();
        assert_eq!(s.timers, vec![(9, Timer::EnterView(2))]);
        assert!(matches!(s.sends[0].1, SyncMsg::BlameCert { view: 1, .. }));
        let s = node.step(SyncEvent::Timer(Timer::EnterView(2)), 9).unwrap();
        assert_eq!(node.view(), 2);
        assert_eq!(s.sends[0].0, Recipient::Author(AuthorId(1)));
        assert!(matches!(s.sends[0].1, SyncMsg::Status { view: 2, .. }));
    }

    #[test]
    fn commit_timer_commits_without_blame() {
        let mut node = SyncHsNode::new(AuthorId(3), 5, "x", BTreeMap::new());
        node.step(SyncEvent::Start, 0).unwrap();
        let propose = SyncMsg::Propose { view: 1, value: "v1".into(), parent: GENESIS.into() };
        let s = node.step(SyncEvent::Message { from: AuthorId(0), msg: propose }, 8).unwrap();
        assert_eq!(s.timers, vec![(12, Timer::Commit(1))]);
        node.step(SyncEvent::Timer(Timer::Commit(1)), 12).unwrap();
        assert_eq!(node.commits().len(), 1);
        assert_eq!(node.commits()[0].id, "v1");
    }

    #[test]
    fn blame_in_view_cancels_commit() {
        let mut node = SyncHsNode::new(AuthorId(3), 5, "x", BTreeMap::new());
        node.step(SyncEvent::Start, 0).unwrap();
        let propose = SyncMsg::Propose { view: 1, value: "v1".into(), parent: GENESIS.into() };
        node.step(SyncEvent::Message { from: AuthorId(0), msg: propose }, 8).unwrap();
        node.step(SyncEvent::Message { from: AuthorId(2), msg: SyncMsg::Blame { view: 1 } }, 9).unwrap();
        node.step(SyncEvent::Timer(Timer::Commit(1)), 12).unwrap();
        assert!(node.commits().is_empty());
    }

    #[test]
    fn equivocation_blocks_commit() {
        let mut node = SyncHsNode::new(AuthorId(3), 5, "x", BTreeMap::new());
        node.step(SyncEvent::Start, 0).unwrap();
        let a = SyncMsg::Propose { view: 1, value: "v1".into(), parent: GENESIS.into() };
        let b = SyncMsg::Vote { view: 1, value: "v9".into(), parent: GENESIS.into() };
        node.step(SyncEvent::Message { from: AuthorId(0), msg: a }, 2).unwrap();
        let s = node.step(SyncEvent::Message { from: AuthorId(1), msg: b }, 3).unwrap();
        assert_eq!(s.sends, vec![(Recipient::Broadcast, SyncMsg::Blame { view: 1 })]);
        node.step(SyncEvent::Timer(Timer::Commit(1)), 6).unwrap();
        assert!(node.commits().is_empty());
    }

    #[test]
    fn out_of_order_tick_is_rejected() {
        let mut node = SyncHsNode::new(AuthorId(0), 5, "x", BTreeMap::new());
        node.step(SyncEvent::Start, 4).unwrap();
        assert_eq!(
            node.step(SyncEvent::Timer(Timer::Blame(1)), 3),
            Err(AttackError::OutOfOrder { event: 3, now: 4 })
        );
    }

    #[test]
    fn benign_run_commits_five_ticks_after_proposal() {
        let mut cluster = honest_cluster(5);
        cluster.run(40).unwrap();
        let proposed_at = cluster
            .log()
            .records()
            .iter()
            .find(|r| r.kind == MessageKind::Proposal && r.src != r.dst)
            .map(|r| r.tick - 1)
            .unwrap();
        for node in &cluster.nodes()[1..] {
            assert_eq!(node.commits().len(), 1);
            assert_eq!(node.commits()[0].id, "x0");
            let line = node.notes().iter().find(|l| l.contains("commits")).unwrap();
            assert_eq!(line, &format!("t={} commits x0", proposed_at + 5));
        }
        assert!(cluster.nodes().iter().all(|n| n.highest_cc().value == "x0"));
    }
}
