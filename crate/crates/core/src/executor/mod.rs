// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Runs testcases and judges the outcome.

mod replay;
mod report;
mod runlog;
mod sim;
mod testcase;
mod verdict;

pub use replay::{replay_attack, AttackName, ReplayOutput, UnknownAttack};
pub use runlog::{RunLog, RunLogError};
pub use report::{ExecutionReport, Verdict};
pub use sim::{execute, execute_chained, instance_seed, ChainedBftAdapter, InstanceSpec, ProtocolAdapter, RunOutput, SimOptions};
pub use testcase::{Restart, TestCase, TestCaseError};
pub use verdict::{
    check_liveness, check_safety, default_timely_rounds, find_rewrite, is_safe, timely_honest_rounds, InstanceLog,
    LivenessCheck, SafetyDetail,
};
