// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use super::{
    DirectedAllow, DropReason, Envelope, EventLog, EventRecord, InstanceTable, LogDecision,
    MessageKind, NodeId, Partition, Recipient, Tick, WireMessage,
};

/// One step of a scripted schedule. Messages of kinds outside `kinds` stay
/// pending; allowed messages crossing a cell boundary, or not matching any
/// directional allow, are dropped for good.
#[derive(Clone, Debug)]
pub struct Phase {
    pub label: String,
    pub partition: Partition,
    pub allows: Vec<DirectedAllow>,
    pub kinds: Vec<MessageKind>,
}

impl Phase {
    pub fn new(label: &str, partition: Partition) -> Self {
        Self { label: label.to_string(), partition, allows: Vec::new(), kinds: Vec::new() }
    }

    pub fn allow(mut self, from: &[NodeId], to: &[NodeId]) -> Self {
        self.allows.push(DirectedAllow::new(from.to_vec(), to.to_vec()));
        self
    }

    pub fn only(mut self, kinds: &[MessageKind]) -> Self {
        self.kinds = kinds.to_vec();
        self
    }

    fn admits(&self, kind: MessageKind) -> bool {
        self.kinds.is_empty() || self.kinds.contains(&kind)
    }

    fn route(&self, src: NodeId, dst: NodeId) -> LogDecision {
        if src == dst {
            return LogDecision::Deliver;
        }
        if !self.partition.connected(src, dst) {
            return LogDecision::Drop(DropReason::Partitioned);
        }
        if !self.allows.is_empty() && !self.allows.iter().any(|a| a.from.contains(&src) && a.to.contains(&dst)) {
            return LogDecision::Drop(DropReason::DirectionBlocked);
        }
        LogDecision::Deliver
    }
}

/// Transport for scripted replays: messages wait in a FIFO pool and are
/// released under the active phase until nothing more can move.
#[derive(Debug)]
pub struct PhasedNetwork<M> {
    table: InstanceTable,
    pending: VecDeque<Envelope<M>>,
    log: EventLog,
    tick: Tick,
}

impl<M: WireMessage> PhasedNetwork<M> {
    pub fn new(table: InstanceTable) -> Self {
        Self { table, pending: VecDeque::new(), log: EventLog::new(), tick: 0 }
    }

    pub fn table(&self) -> &InstanceTable {
        &self.table
    }

    /// Phase counter; used as the tick of log records.
    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }

    pub fn send(&mut self, src: NodeId, to: &Recipient, msg: M) {
        for dst in self.table.fan_out(to) {
            self.pending.push_back(Envelope::new(src, dst, msg.clone()));
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Next deliverable envelope under `phase`, logging any drops met on
    /// the way. `None` means the phase is quiescent.
    pub fn next(&mut self, phase: &Phase) -> Option<Envelope<M>> {
        let mut i = 0;
        while i < self.pending.len() {
            if !phase.admits(self.pending[i].kind) {
                i += 1;
                continue;
            }
            let env = self.pending.remove(i).expect("index in range");
            let decision = phase.route(env.src, env.dst);
            self.record(&env, decision);
            if decision == LogDecision::Deliver {
                return Some(env);
            }
        }
        None
    }

    /// Drop everything still pending.
    pub fn flush(&mut self) {
        while let Some(env) = self.pending.pop_front() {
            self.record(&env, LogDecision::Drop(DropReason::Flushed));
        }
    }

    fn record(&mut self, env: &Envelope<M>, decision: LogDecision) {
        self.log.push(EventRecord {
            tick: self.tick,
            src: env.src,
            dst: env.dst,
            kind: env.kind,
            round: env.inferred_round,
            decision,
            summary: env.body.summary(),
        });
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{AuthorId, Round};

    #[derive(Clone, Debug)]
    struct Msg(MessageKind);

    impl WireMessage for Msg {
        fn kind(&self) -> MessageKind {
            self.0
        }
        fn round(&self) -> Round {
            1
        }
        fn summary(&self) -> String {
            self.0.to_string()
        }
    }

    fn ids(v: &[usize]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn held_kinds_survive_until_admitted() {
        let table = InstanceTable::register(3, &[]).unwrap();
        let mut net = PhasedNetwork::new(table);
        net.send(NodeId(0), &Recipient::Author(AuthorId(1)), Msg(MessageKind::Vote));
        let proposals_only = Phase::new("p", Partition::fully_connected(3)).only(&[MessageKind::Proposal]);
        assert!(net.next(&proposals_only).is_none());
        assert_eq!(net.pending(), 1);
        let any = Phase::new("any", Partition::fully_connected(3));
        assert_eq!(net.next(&any).unwrap().dst, NodeId(1));
    }

    #[test]
    fn partitioned_messages_are_dropped_not_held() {
        let table = InstanceTable::register(3, &[]).unwrap();
        let mut net = PhasedNetwork::new(table);
        net.send(NodeId(0), &Recipient::Broadcast, Msg(MessageKind::Proposal));
        let split = Phase::new("s", Partition::new(vec![ids(&[0, 1]), ids(&[2])]));
        let got: Vec<_> = std::iter::from_fn(|| net.next(&split)).map(|e| e.dst).collect();
        assert_eq!(got, ids(&[0, 1]));
        assert_eq!(net.pending(), 0);
        assert_eq!(net.log().dropped(), 1);
    }

    #[test]
    fn directional_allow_inside_cell() {
        let table = InstanceTable::register(4, &[AuthorId(3)]).unwrap();
        let mut net = PhasedNetwork::new(table);
        // A=0 B=1 C=2 D=3 D'=4; only (B,D) -> A and (C,D') -> (C,D').
        let phase = Phase::new("v", Partition::new(vec![ids(&[0, 1, 3]), ids(&[2, 4])]))
            .allow(&ids(&[1, 3]), &ids(&[0]))
            .allow(&ids(&[2, 4]), &ids(&[2, 4]));
        net.send(NodeId(1), &Recipient::Broadcast, Msg(MessageKind::Vote));
        let got: Vec<_> = std::iter::from_fn(|| net.next(&phase)).map(|e| e.dst).collect();
        assert_eq!(got, ids(&[0, 1]));
        net.send(NodeId(4), &Recipient::Broadcast, Msg(MessageKind::Vote));
        let got: Vec<_> = std::iter::from_fn(|| net.next(&phase)).map(|e| e.dst).collect();
        assert_eq!(got, ids(&[2, 4]));
    }
}
