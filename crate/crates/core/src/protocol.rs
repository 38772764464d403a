// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Contract between protocol state machines and the executor.

use serde::{Deserialize, Serialize};

use crate::net::{AuthorId, Recipient, Round, Tick, WireMessage};

pub type TimerToken = u64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action<M> {
    Send { to: Recipient, msg: M },
    SetTimer { at: Tick, token: TimerToken },
}

/// One committed decision. `id` is the full identifier; `height` its
/// position in the committing instance's chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub height: u64,
    pub round: Round,
    pub id: String,
}

impl CommitEntry {
    pub fn short_id(&self) -> &str {
        &self.id[..self.id.len().min(8)]
    }
}

pub trait Protocol {
    type Message: WireMessage + Serialize;

    fn start(&mut self, now: Tick) -> Vec<Action<Self::Message>>;
    /// `from` is the sender's author; instances are never exposed.
    fn on_message(&mut self, from: AuthorId, msg: Self::Message, now: Tick) -> Vec<Action<Self::Message>>;
    fn on_timer(&mut self, token: TimerToken, now: Tick) -> Vec<Action<Self::Message>>;
    fn commit_log(&self) -> &[CommitEntry];
    fn current_round(&self) -> Round;
    /// Rejections and warnings raised so far.
    fn notes(&self) -> &[String];
}
