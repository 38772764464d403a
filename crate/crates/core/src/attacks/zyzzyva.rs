// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Zyzzyva, one slot. The leader commits on the fast track once all `n`
//! authors vote; if its vote timer fires with only `2f+1` it issues a commit
//! certificate, and nodes commit after `2f+1` votes on that certificate.
//! The new-view rule prefers any certificate over fresher votes, which is
//! the bug the replay exploits.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{partial_sync_faults, AttackError, Outbox, View, NIL};
use crate::net::{AuthorId, MessageKind, Recipient, Round, WireMessage};
use crate::protocol::CommitEntry;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCert {
    pub value: String,
    pub view: View,
    pub voters: BTreeSet<AuthorId>,
}

/// What a node reports to the next leader.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub author: AuthorId,
    pub cc: Option<CommitCert>,
    /// Last value voted for and the view of that vote.
    pub last_vote: Option<(String, View)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZyzzyvaMsg {
    Propose { view: View, value: String },
    Vote { view: View, value: String },
    Certificate(CommitCert),
    CertVote { view: View, value: String },
    /// Fast-track decision announced by the leader.
    Decide { view: View, value: String },
    NewView { view: View, status: Status },
}

impl WireMessage for ZyzzyvaMsg {
    fn kind(&self) -> MessageKind {
        match self {
            ZyzzyvaMsg::Propose { .. } => MessageKind::Proposal,
            ZyzzyvaMsg::Vote { .. } | ZyzzyvaMsg::CertVote { .. } => MessageKind::Vote,
            ZyzzyvaMsg::Certificate(_) | ZyzzyvaMsg::Decide { .. } => MessageKind::Certificate,
            ZyzzyvaMsg::NewView { .. } => MessageKind::Status,
        }
    }

    fn round(&self) -> Round {
        match self {
            ZyzzyvaMsg::Propose { view, .. }
            | ZyzzyvaMsg::Vote { view, .. }
            | ZyzzyvaMsg::CertVote { view, .. }
            | ZyzzyvaMsg::Decide { view, .. }
            | ZyzzyvaMsg::NewView { view, .. } => *view,
            ZyzzyvaMsg::Certificate(cc) => cc.view,
        }
    }

    fn summary(&self) -> String {
        match self {
            ZyzzyvaMsg::Propose { view, value } => format!("propose {value} v{view}"),
            ZyzzyvaMsg::Vote { view, value } => format!("vote {value} v{view}"),
            ZyzzyvaMsg::Certificate(cc) => format!("cc {} v{}", cc.value, cc.view),
            ZyzzyvaMsg::CertVote { view, value } => format!("cc-vote {value} v{view}"),
            ZyzzyvaMsg::Decide { view, value } => format!("decide {value} v{view}"),
            ZyzzyvaMsg::NewView { view, status } => {
                let cc = status.cc.as_ref().map_or("-".to_string(), |c| format!("cc({})@{}", c.value, c.view));
                let vote = status.last_vote.as_ref().map_or("-".to_string(), |(v, w)| format!("{v}@{w}"));
                format!("new-view v{view} {cc} vote {vote}")
            }
        }
    }
}

/// Picks the proposal for a new view from `2f+1` statuses: the certificate
/// from the highest view if any, else a value with `f+1` votes in the
/// highest voted view, else nil.
pub fn new_view_pick(statuses: &[Status], f: usize) -> Result<Option<String>, AttackError> {
    let need = 2 * f + 1;
    if statuses.len() < need {
        return Err(AttackError::TooFewStatus { got: statuses.len(), need });
    }
    if let Some(cc) = statuses.iter().filter_map(|s| s.cc.as_ref()).max_by_key(|c| c.view) {
        return Ok(Some(cc.value.clone()));
    }
    let Some(top) = statuses.iter().filter_map(|s| s.last_vote.as_ref().map(|(_, w)| *w)).max() else {
        return Ok(None);
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (value, _) in statuses.iter().filter_map(|s| s.last_vote.as_ref()).filter(|(_, w)| *w == top) {
        *counts.entry(value.as_str()).or_default() += 1;
    }
    Ok(counts.into_iter().find(|(_, c)| *c > f).map(|(v, _)| v.to_string()))
}

#[derive(Clone, Debug)]
pub struct ZyzzyvaNode {
    author: AuthorId,
    n: usize,
    f: usize,
    input: String,
    leaders: BTreeMap<View, AuthorId>,
    view: View,
    last_vote: Option<(String, View)>,
    cc: Option<CommitCert>,
    votes: BTreeMap<(View, String), BTreeSet<AuthorId>>,
    cert_votes: BTreeMap<(View, String), BTreeSet<AuthorId>>,
    statuses: BTreeMap<View, BTreeMap<AuthorId, Status>>,
    /// Views in which this node, as leader, has proposed, certified or
    /// decided.
    proposed: BTreeSet<View>,
    certified: BTreeSet<View>,
    fast_decided: BTreeSet<View>,
    commits: Vec<CommitEntry>,
    notes: Vec<String>,
}

impl ZyzzyvaNode {
    pub fn new(author: AuthorId, n: usize, input: &str, leaders: BTreeMap<View, AuthorId>) -> Self {
        Self {
            author,
            n,
            f: partial_sync_faults(n),
            input: input.to_string(),
            leaders,
            view: 1,
            last_vote: None,
            cc: None,
            votes: BTreeMap::new(),
            cert_votes: BTreeMap::new(),
            statuses: BTreeMap::new(),
            proposed: BTreeSet::new(),
            certified: BTreeSet::new(),
            fast_decided: BTreeSet::new(),
            commits: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn leader(&self, view: View) -> AuthorId {
        self.leaders.get(&view).copied().unwrap_or(AuthorId((view as usize - 1) % self.n))
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn commit_cert(&self) -> Option<&CommitCert> {
        self.cc.as_ref()
    }

    pub fn commits(&self) -> &[CommitEntry] {
        &self.commits
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// First view needs no new-view round: its leader proposes its input.
    pub fn start(&mut self) -> Outbox<ZyzzyvaMsg> {
        if self.leader(1) != self.author {
            return Vec::new();
        }
        self.proposed.insert(1);
        let value = self.input.clone();
        vec![(Recipient::Broadcast, ZyzzyvaMsg::Propose { view: 1, value })]
    }

    pub fn enter_view(&mut self, view: View) -> Outbox<ZyzzyvaMsg> {
        self.view = view;
        let status = Status { author: self.author, cc: self.cc.clone(), last_vote: self.last_vote.clone() };
        vec![(Recipient::Author(self.leader(view)), ZyzzyvaMsg::NewView { view, status })]
    }

    /// The leader's vote timer: with a `2f+1` quorum but no fast track, it
    /// falls back to a commit certificate.
    pub fn on_vote_timer(&mut self) -> Outbox<ZyzzyvaMsg> {
        let view = self.view;
        if self.leader(view) != self.author || self.certified.contains(&view) || self.fast_decided.contains(&view) {
            return Vec::new();
        }
        let quorum = 2 * self.f + 1;
        let Some(((_, value), voters)) =
            self.votes.iter().find(|((w, _), voters)| *w == view && voters.len() >= quorum)
        else {
            return Vec::new();
        };
        let cc = CommitCert { value: value.clone(), view, voters: voters.clone() };
        self.notes.push(format!("view {view}: vote timer, certificate for {value} from {} votes", voters.len()));
        self.certified.insert(view);
        vec![(Recipient::Broadcast, ZyzzyvaMsg::Certificate(cc))]
    }

    pub fn on_message(&mut self, from: AuthorId, msg: ZyzzyvaMsg) -> Outbox<ZyzzyvaMsg> {
        match msg {
            ZyzzyvaMsg::Propose { view, value } => {
                if view != self.view || from != self.leader(view) {
                    return Vec::new();
                }
                if self.last_vote.as_ref().is_some_and(|(_, w)| *w == view) {
                    return Vec::new();
                }
                self.last_vote = Some((value.clone(), view));
                vec![(Recipient::Author(self.leader(view)), ZyzzyvaMsg::Vote { view, value })]
            }
            ZyzzyvaMsg::Vote { view, value } => {
                if self.leader(view) != self.author {
                    return Vec::new();
                }
                let voters = self.votes.entry((view, value.clone())).or_default();
                voters.insert(from);
                if voters.len() == self.n && self.fast_decided.insert(view) {
                    self.notes.push(format!("view {view}: all {} authors voted {value}, fast track", self.n));
                    self.commit(&value, view);
                    return vec![(Recipient::Broadcast, ZyzzyvaMsg::Decide { view, value })];
                }
                Vec::new()
            }
            ZyzzyvaMsg::Certificate(cc) => {
                if cc.voters.len() < 2 * self.f + 1 {
                    return Vec::new();
                }
                let (view, value) = (cc.view, cc.value.clone());
                if self.cc.as_ref().is_none_or(|held| cc.view > held.view) {
                    self.cc = Some(cc);
                }
                vec![(Recipient::Broadcast, ZyzzyvaMsg::CertVote { view, value })]
            }
            ZyzzyvaMsg::CertVote { view, value } => {
                let voters = self.cert_votes.entry((view, value.clone())).or_default();
                voters.insert(from);
                if voters.len() == 2 * self.f + 1 {
                    self.commit(&value, view);
                }
                Vec::new()
            }
            ZyzzyvaMsg::Decide { view, value } => {
                if from == self.leader(view) {
                    self.commit(&value, view);
                }
                Vec::new()
            }
            ZyzzyvaMsg::NewView { view, status } => self.on_status(view, from, status),
        }
    }

    fn on_status(&mut self, view: View, from: AuthorId, status: Status) -> Outbox<ZyzzyvaMsg> {
        if view != self.view || self.leader(view) != self.author || self.proposed.contains(&view) {
            return Vec::new();
        }
        let held = self.statuses.entry(view).or_default();
        held.insert(from, status);
        if held.len() < 2 * self.f + 1 {
            return Vec::new();
        }
        let statuses: Vec<Status> = held.values().cloned().collect();
        let value = new_view_pick(&statuses, self.f).expect("quorum checked").unwrap_or_else(|| NIL.to_string());
        self.notes.push(format!("view {view}: picked {value} from {} statuses", statuses.len()));
        self.proposed.insert(view);
        vec![(Recipient::Broadcast, ZyzzyvaMsg::Propose { view, value })]
    }

    fn commit(&mut self, value: &str, view: View) {
        if self.commits.last().is_some_and(|c| c.id == value) {
            return;
        }
        if let Some(prev) = self.commits.last() {
            self.notes.push(format!("view {view}: undoing {} to commit {value}", prev.id));
        }
        self.commits.push(CommitEntry { height: 1, round: view, id: value.to_string() });
    }
}
