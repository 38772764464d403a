// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{MessageKind, NodeId, Round, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    At(Tick),
    After(Tick),
}

/// Delivery rule for the timed transport: messages of `kind` in `round`
/// sent by `sender` reach `receivers` at the given tick.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedDelivery {
    pub sender: NodeId,
    pub receivers: Vec<NodeId>,
    pub kind: MessageKind,
    pub round: Round,
    pub arrival: Arrival,
}

impl TimedDelivery {
    pub fn at(sender: NodeId, receivers: &[NodeId], kind: MessageKind, round: Round, tick: Tick) -> Self {
        Self { sender, receivers: receivers.to_vec(), kind, round, arrival: Arrival::At(tick) }
    }

    pub fn after(sender: NodeId, receivers: &[NodeId], kind: MessageKind, round: Round, delay: Tick) -> Self {
        Self { sender, receivers: receivers.to_vec(), kind, round, arrival: Arrival::After(delay) }
    }

    fn matches(&self, src: NodeId, dst: NodeId, kind: MessageKind, round: Round) -> bool {
        self.sender == src && self.kind == kind && self.round == round && self.receivers.contains(&dst)
    }
}

/// Arrival-time transport. The first matching rule wins; unmatched messages
/// take `default_delay`, or are dropped when it is `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedNetwork {
    pub rules: Vec<TimedDelivery>,
    pub default_delay: Option<Tick>,
}

impl TimedNetwork {
    pub fn new(rules: Vec<TimedDelivery>, default_delay: Option<Tick>) -> Self {
        Self { rules, default_delay }
    }

    /// Arrival tick for a message sent at `now`, never earlier than `now`.
    pub fn arrival(&self, src: NodeId, dst: NodeId, kind: MessageKind, round: Round, now: Tick) -> Option<Tick> {
        if src == dst {
            return Some(now);
        }
        let at = match self.rules.iter().find(|r| r.matches(src, dst, kind, round)) {
            Some(rule) => match rule.arrival {
                Arrival::At(t) => t,
                Arrival::After(d) => now + d,
            },
            None => now + self.default_delay?,
        };
        Some(at.max(now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_arrival_wins_over_default() {
        let net = TimedNetwork::new(
            vec![TimedDelivery::at(NodeId(0), &[NodeId(2)], MessageKind::Proposal, 1, 7)],
            Some(1),
        );
        assert_eq!(net.arrival(NodeId(0), NodeId(2), MessageKind::Proposal, 1, 3), Some(7));
        assert_eq!(net.arrival(NodeId(0), NodeId(1), MessageKind::Proposal, 1, 3), Some(4));
        assert_eq!(net.arrival(NodeId(0), NodeId(2), MessageKind::Vote, 1, 3), Some(4));
    }

    #[test]
    fn unmatched_dropped_without_default() {
        let net = TimedNetwork::new(vec![], None);
        assert_eq!(net.arrival(NodeId(0), NodeId(1), MessageKind::Vote, 1, 0), None);
        assert_eq!(net.arrival(NodeId(1), NodeId(1), MessageKind::Vote, 1, 4), Some(4));
    }

    #[test]
    fn never_before_send_tick() {
        let net = TimedNetwork::new(
            vec![TimedDelivery::at(NodeId(0), &[NodeId(1)], MessageKind::Blame, 1, 2)],
            None,
        );
        assert_eq!(net.arrival(NodeId(0), NodeId(1), MessageKind::Blame, 1, 5), Some(5));
    }
}
