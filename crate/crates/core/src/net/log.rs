// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use super::{DropReason, MessageKind, NodeId, Round, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogDecision {
    Deliver,
    Drop(DropReason),
}

/// One delivery or drop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: Tick,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
    pub round: Round,
    pub decision: LogDecision,
    pub summary: String,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let decision = match self.decision {
            LogDecision::Deliver => "deliver".to_string(),
            LogDecision::Drop(r) => format!("drop({r})"),
        };
        write!(
            f,
            "t={:<4} {:>4} -> {:<4} {:<11} r={:<3} {:<18} {}",
            self.tick, self.src, self.dst, self.kind, self.round, decision, self.summary
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn delivered(&self) -> usize {
        self.records.iter().filter(|r| r.decision == LogDecision::Deliver).count()
    }

    pub fn dropped(&self) -> usize {
        self.records.len() - self.delivered()
    }

    /// SHA-256 over the rendered records; equal hashes mean equal traces.
    pub fn trace_hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(r.to_string().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
