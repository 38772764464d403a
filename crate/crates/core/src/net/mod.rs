// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic transport: twin multiplexing, per-round partitions,
//! directional rules, timed delivery and phase-scripted delivery.

mod ids;
mod log;
mod phased;
mod queue;
mod schedule;
mod timed;

pub use ids::{AuthorId, InstanceTable, NodeId};
pub use log::{EventLog, EventRecord, LogDecision};
pub use phased::{Phase, PhasedNetwork};
pub use queue::{EventQueue, Scheduled};
pub use schedule::{DirectedAllow, DropReason, Partition, Round, RoundSchedule, RouteDecision};
pub use timed::{TimedDelivery, TimedNetwork};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Logical simulation time.
pub type Tick = u64;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("author {0} does not exist")]
    UnknownAuthor(AuthorId),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("author {0} listed twice as a target")]
    DuplicateTarget(AuthorId),
    #[error("node {0} appears in more than one cell")]
    OverlappingCells(NodeId),
    #[error("node {0} is not covered by any cell")]
    UncoveredNode(NodeId),
    #[error("event at tick {event} scheduled before current tick {now}")]
    OutOfOrder { event: Tick, now: Tick },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Proposal,
    Vote,
    Timeout,
    Status,
    Blame,
    Certificate,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MessageKind::Proposal => "proposal",
            MessageKind::Vote => "vote",
            MessageKind::Timeout => "timeout",
            MessageKind::Status => "status",
            MessageKind::Blame => "blame",
            MessageKind::Certificate => "certificate",
        };
        f.write_str(s)
    }
}

/// What the transport needs to know about a protocol message.
pub trait WireMessage: Clone + fmt::Debug {
    fn kind(&self) -> MessageKind;
    /// Round (or view) carried in the message body.
    fn round(&self) -> Round;
    /// Short human-readable rendering for traces.
    fn summary(&self) -> String;
}

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub src: NodeId,
    pub dst: NodeId,
    pub inferred_round: Round,
    pub kind: MessageKind,
    pub body: M,
}

impl<M: WireMessage> Envelope<M> {
    pub fn new(src: NodeId, dst: NodeId, body: M) -> Self {
        Self { src, dst, inferred_round: body.round(), kind: body.kind(), body }
    }
}

/// Message destination as seen by a protocol: it addresses authors, never
/// instances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Recipient {
    Author(AuthorId),
    Authors(Vec<AuthorId>),
    Broadcast,
}

impl InstanceTable {
    /// Every instance a message to `recipient` fans out to, in NodeId order.
    pub fn fan_out(&self, recipient: &Recipient) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = match recipient {
            Recipient::Broadcast => self.nodes().collect(),
            Recipient::Author(a) => self.instances_of(*a).to_vec(),
            Recipient::Authors(list) => {
                list.iter().flat_map(|a| self.instances_of(*a).iter().copied()).collect()
            }
        };
        out.sort();
        out.dedup();
        out
    }
}
