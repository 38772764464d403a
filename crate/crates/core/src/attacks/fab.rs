// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! FaB Paxos, one slot, with `t = 0`. Votes are broadcast; any node holding
//! `2f+1` matching votes has a commit certificate and announces it, `2f+1`
//! announcements commit, and `n` votes commit on the fast track. A new
//! leader may only propose a value its progress certificate vouches for.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{partial_sync_faults, Outbox, View};
use crate::net::{AuthorId, MessageKind, Recipient, Round, WireMessage};
use crate::protocol::CommitEntry;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCert {
    pub value: String,
    pub view: View,
    pub voters: BTreeSet<AuthorId>,
}

/// One entry of a progress certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub author: AuthorId,
    /// Value this node accepted, if any.
    pub value: Option<String>,
    pub cc: Option<CommitCert>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FabMsg {
    Propose { view: View, value: String },
    Vote { view: View, value: String },
    Certified { view: View, value: String },
    NewView { view: View, report: Report },
}

impl WireMessage for FabMsg {
    fn kind(&self) -> MessageKind {
        match self {
            FabMsg::Propose { .. } => MessageKind::Proposal,
            FabMsg::Vote { .. } => MessageKind::Vote,
            FabMsg::Certified { .. } => MessageKind::Certificate,
            FabMsg::NewView { .. } => MessageKind::Status,
        }
    }

    fn round(&self) -> Round {
        match self {
            FabMsg::Propose { view, .. }
            | FabMsg::Vote { view, .. }
            | FabMsg::Certified { view, .. }
            | FabMsg::NewView { view, .. } => *view,
        }
    }

    fn summary(&self) -> String {
        match self {
            FabMsg::Propose { view, value } => format!("propose {value} v{view}"),
            FabMsg::Vote { view, value } => format!("vote {value} v{view}"),
            FabMsg::Certified { view, value } => format!("certified {value} v{view}"),
            FabMsg::NewView { view, report } => {
                let value = report.value.as_deref().unwrap_or("-");
                let cc = report.cc.as_ref().map_or("-".to_string(), |c| format!("cc({})", c.value));
                format!("new-view v{view} {value} {cc}")
            }
        }
    }
}

/// Values the progress certificate vouches for: those in conflict with
/// neither a certificate nor `f+1` votes for a different value. An empty
/// result with a non-empty certificate means the new leader is stuck.
pub fn vouches_for(cert: &[Report], f: usize) -> BTreeSet<String> {
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for v in cert.iter().filter_map(|r| r.value.as_deref()) {
        *votes.entry(v).or_default() += 1;
    }
    let certified: BTreeSet<&str> = cert.iter().filter_map(|r| r.cc.as_ref().map(|c| c.value.as_str())).collect();
    let candidates: BTreeSet<&str> = votes.keys().copied().chain(certified.iter().copied()).collect();
    candidates
        .into_iter()
        .filter(|v| !certified.iter().any(|c| c != v))
        .filter(|v| !votes.iter().any(|(other, n)| other != v && *n > f))
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug)]
pub struct FabNode {
    author: AuthorId,
    n: usize,
    f: usize,
    input: String,
    leaders: BTreeMap<View, AuthorId>,
    view: View,
    accepted: Option<(String, View)>,
    cc: Option<CommitCert>,
    votes: BTreeMap<(View, String), BTreeSet<AuthorId>>,
    announced: BTreeMap<(View, String), BTreeSet<AuthorId>>,
    reports: BTreeMap<View, BTreeMap<AuthorId, Report>>,
    proposed: BTreeSet<View>,
    stuck: BTreeSet<View>,
    commits: Vec<CommitEntry>,
    notes: Vec<String>,
}

impl FabNode {
    pub fn new(author: AuthorId, n: usize, input: &str, leaders: BTreeMap<View, AuthorId>) -> Self {
        Self {
            author,
            n,
            f: partial_sync_faults(n),
            input: input.to_string(),
            leaders,
            view: 1,
            accepted: None,
            cc: None,
            votes: BTreeMap::new(),
            announced: BTreeMap::new(),
            reports: BTreeMap::new(),
            proposed: BTreeSet::new(),
            stuck: BTreeSet::new(),
            commits: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn leader(&self, view: View) -> AuthorId {
        self.leaders.get(&view).copied().unwrap_or(AuthorId((view as usize - 1) % self.n))
    }

    pub fn commit_cert(&self) -> Option<&CommitCert> {
        self.cc.as_ref()
    }

    /// Views in which this node led but had nothing it could propose.
    pub fn stuck_views(&self) -> &BTreeSet<View> {
        &self.stuck
    }

    pub fn commits(&self) -> &[CommitEntry] {
        &self.commits
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn start(&mut self) -> Outbox<FabMsg> {
        if self.leader(1) != self.author {
            return Vec::new();
        }
        self.proposed.insert(1);
        vec![(Recipient::Broadcast, FabMsg::Propose { view: 1, value: self.input.clone() })]
    }

    pub fn enter_view(&mut self, view: View) -> Outbox<FabMsg> {
        self.view = view;
        let report =
            Report { author: self.author, value: self.accepted.as_ref().map(|(v, _)| v.clone()), cc: self.cc.clone() };
        vec![(Recipient::Author(self.leader(view)), FabMsg::NewView { view, report })]
    }

    pub fn on_message(&mut self, from: AuthorId, msg: FabMsg) -> Outbox<FabMsg> {
        match msg {
            FabMsg::Propose { view, value } => {
                if view != self.view || from != self.leader(view) || self.accepted.as_ref().is_some_and(|(_, w)| *w == view) {
                    return Vec::new();
                }
                self.accepted = Some((value.clone(), view));
                vec![(Recipient::Broadcast, FabMsg::Vote { view, value })]
            }
            FabMsg::Vote { view, value } => {
                let voters = self.votes.entry((view, value.clone())).or_default();
                voters.insert(from);
                let count = voters.len();
                let voters = voters.clone();
                let mut out = Vec::new();
                if count == 2 * self.f + 1 {
                    self.notes.push(format!("view {view}: certificate for {value}"));
                    self.cc = Some(CommitCert { value: value.clone(), view, voters });
                    out.push((Recipient::Broadcast, FabMsg::Certified { view, value: value.clone() }));
                }
                if count == self.n {
                    self.commit(&value, view);
                }
                out
            }
            FabMsg::Certified { view, value } => {
                let from_set = self.announced.entry((view, value.clone())).or_default();
                from_set.insert(from);
                if from_set.len() == 2 * self.f + 1 {
                    self.commit(&value, view);
                }
                Vec::new()
            }
            FabMsg::NewView { view, report } => self.on_report(view, from, report),
        }
    }

    fn on_report(&mut self, view: View, from: AuthorId, report: Report) -> Outbox<FabMsg> {
        if view != self.view || self.leader(view) != self.author || self.proposed.contains(&view) {
            return Vec::new();
        }
        let held = self.reports.entry(view).or_default();
        held.insert(from, report);
        if held.len() < 2 * self.f + 1 {
            return Vec::new();
        }
        let cert: Vec<Report> = held.values().cloned().collect();
        let any_value = cert.iter().any(|r| r.value.is_some() || r.cc.is_some());
        let vouched = vouches_for(&cert, self.f);
        let value = match vouched.into_iter().next() {
            Some(v) => v,
            None if !any_value => self.input.clone(),
            None => {
                if self.stuck.insert(view) {
                    self.notes.push(format!("view {view}: progress certificate vouches for no value"));
                }
                return Vec::new();
            }
        };
        self.proposed.insert(view);
        vec![(Recipient::Broadcast, FabMsg::Propose { view, value })]
    }

    fn commit(&mut self, value: &str, view: View) {
        if self.commits.iter().any(|c| c.id == value) {
            return;
        }
        self.commits.push(CommitEntry { height: 1, round: view, id: value.to_string() });
    }
}
