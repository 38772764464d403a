// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use std::fmt;

use super::verdict::{InstanceLog, LivenessCheck, SafetyDetail};
use crate::net::{Round, Tick};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    SafetyViolation { detail: SafetyDetail },
    LivenessViolation { rounds: Vec<Round> },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Safe => "safe",
            Verdict::SafetyViolation { .. } => "safety_violation",
            Verdict::LivenessViolation { .. } => "liveness_violation",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::SafetyViolation { .. } | Verdict::LivenessViolation { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Safe => f.write_str("safe"),
            Verdict::SafetyViolation { detail } => write!(f, "safety_violation: {detail}"),
            Verdict::LivenessViolation { rounds } => {
                write!(f, "liveness_violation: no decision in timely honest rounds {rounds:?}")
            }
            Verdict::Inconclusive { reason } => write!(f, "inconclusive: {reason}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub verdict: Verdict,
    pub liveness: LivenessCheck,
    pub logs: Vec<InstanceLog>,
    pub messages_sent: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub elapsed_rounds: Round,
    pub ticks: Tick,
    pub warnings: usize,
    pub trace_hash: String,
}

impl ExecutionReport {
    pub fn inconclusive(reason: String) -> Self {
        Self {
            verdict: Verdict::Inconclusive { reason },
            liveness: LivenessCheck::NotApplicable,
            logs: Vec::new(),
            messages_sent: 0,
            delivered: 0,
            dropped: 0,
            elapsed_rounds: 0,
            ticks: 0,
            warnings: 0,
            trace_hash: String::new(),
        }
    }

    pub fn honest_commits(&self) -> usize {
        self.logs.iter().filter(|l| l.honest).map(|l| l.entries.len()).sum()
    }

    pub fn total_commits(&self) -> usize {
        self.logs.iter().map(|l| l.entries.len()).sum()
    }

    /// Commit logs rendered one line per entry, e.g. `[C] commit 9be3486f r1 h1`.
    pub fn render_commits(&self) -> String {
        let mut out = String::new();
        for log in &self.logs {
            for e in &log.entries {
                out.push_str(&format!("[{}] commit {} r{} h{}\n", log.label, e.short_id(), e.round, e.height));
            }
        }
        out
    }
}
