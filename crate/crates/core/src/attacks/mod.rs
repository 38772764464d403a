// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Single-slot state machines for known-flawed protocols. Each one is just
//! enough protocol to replay a scripted attack: nodes react to messages and
//! return what they want sent; the replay driver owns the transport.

pub mod fab;
pub mod synchs;
pub mod tendermint;
pub mod zyzzyva;

use crate::net::{Recipient, Tick};

pub type View = u64;

/// Messages a node asks the transport to send.
pub type Outbox<M> = Vec<(Recipient, M)>;

/// Value a leader proposes when no candidate is safe.
pub const NIL: &str = "nil";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AttackError {
    #[error("need {need} new-view messages, got {got}")]
    TooFewStatus { got: usize, need: usize },
    #[error("event at tick {event} delivered after tick {now}")]
    OutOfOrder { event: Tick, now: Tick },
}

/// Faults tolerated by a partially synchronous protocol with `n` nodes.
pub fn partial_sync_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// Faults tolerated by a synchronous protocol with `n` nodes.
pub fn sync_faults(n: usize) -> usize {
    n.saturating_sub(1) / 2
}
