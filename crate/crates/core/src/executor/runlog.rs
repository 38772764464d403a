// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run logs: the testcase plus everything observed while running it. A log
//! is enough to re-run the case and check that nothing changed.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::report::ExecutionReport;
use super::sim::{execute, ChainedBftAdapter, RunOutput, SimOptions};
use super::testcase::TestCase;
use crate::net::EventLog;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLog {
    pub testcase: TestCase,
    #[serde(default)]
    pub strict_safety: bool,
    pub events: EventLog,
    pub report: ExecutionReport,
}

#[derive(Debug, thiserror::Error)]
pub enum RunLogError {
    #[error("cannot access run log: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run log: {0}")]
    Format(#[from] serde_json::Error),
    #[error("replay diverged: {0}")]
    Diverged(String),
}

impl RunLog {
    pub fn new(testcase: &TestCase, opts: &SimOptions, run: &RunOutput) -> Self {
        Self {
            testcase: testcase.clone(),
            strict_safety: opts.strict_safety,
            events: run.events.clone(),
            report: run.report.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), RunLogError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, RunLogError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Re-runs the logged testcase and checks the event trace and verdict
    /// come out identical.
    pub fn replay(&self) -> Result<RunOutput, RunLogError> {
        let opts = SimOptions { strict_safety: self.strict_safety, ..SimOptions::default() };
        let run = execute(&self.testcase, &ChainedBftAdapter::default(), &opts);
        if run.report.trace_hash != self.report.trace_hash {
            return Err(RunLogError::Diverged(format!(
                "trace hash {} != logged {}",
                run.report.trace_hash, self.report.trace_hash
            )));
        }
        if run.events != self.events {
            return Err(RunLogError::Diverged("event trace differs".into()));
        }
        if run.report.verdict != self.report.verdict {
            return Err(RunLogError::Diverged(format!("verdict {} != logged {}", run.report.verdict, self.report.verdict)));
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::MutationConfig;
    use crate::net::{AuthorId, NodeId, Partition};

    fn split_case() -> TestCase {
        let ids = |v: &[usize]| v.iter().copied().map(NodeId).collect::<Vec<_>>();
        let split = Partition::new(vec![ids(&[0, 1]), ids(&[2, 3, 4])]);
        let mut tc = TestCase::fixed(4, vec![AuthorId(0)], split, vec![AuthorId(0)], 7, 11);
        tc.mutation = MutationConfig::quorum_2f(4);
        tc
    }

    #[test]
    fn round_trip_and_replay() {
        let tc = split_case();
        let opts = SimOptions::default();
        let run = execute(&tc, &ChainedBftAdapter::default(), &opts);
        let log = RunLog::new(&tc, &opts, &run);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.json");
        log.write(&path).unwrap();
        let back = RunLog::read(&path).unwrap();
        assert_eq!(back, log);
        let again = back.replay().unwrap();
        assert_eq!(again.report, run.report);
    }

    #[test]
    fn tampered_log_is_caught() {
        let tc = split_case();
        let opts = SimOptions::default();
        let run = execute(&tc, &ChainedBftAdapter::default(), &opts);
        let mut log = RunLog::new(&tc, &opts, &run);
        log.testcase.seed ^= 1;
        assert!(matches!(log.replay(), Err(RunLogError::Diverged(_))));
    }
}
