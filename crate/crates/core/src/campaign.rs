// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Batch execution of generated testcases on a worker pool. Results are
//! merged back in ordinal order so output never depends on scheduling.

use rayon::prelude::*;
use serde::Serialize;
use std::time::{Duration, Instant};

use crate::executor::{execute, ChainedBftAdapter, RunLog, SimOptions, Verdict};
use crate::generator::OfflineRecord;

#[derive(Clone, Debug)]
pub struct CampaignOptions {
    pub sim: SimOptions,
    pub stop_on_violation: bool,
    /// Cases handed to the pool at once; also the granularity of stopping.
    pub batch: usize,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self { sim: SimOptions::default(), stop_on_violation: false, batch: 256 }
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub ordinal: u64,
    pub verdict: Verdict,
    pub elapsed: Duration,
    pub honest_commits: usize,
    /// Kept only for violating cases.
    pub log: Option<RunLog>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub cases: usize,
    pub safe: usize,
    pub safety_violations: usize,
    pub liveness_violations: usize,
    pub inconclusive: usize,
    pub violating_ordinals: Vec<u64>,
    pub stopped_early: bool,
    pub wall_ms: f64,
    pub case_ms_mean: f64,
    pub case_ms_std: f64,
}

impl CampaignSummary {
    pub fn violations(&self) -> usize {
        self.safety_violations + self.liveness_violations
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "cases {}  safe {}  safety violations {}  liveness violations {}  inconclusive {}\n",
            self.cases, self.safe, self.safety_violations, self.liveness_violations, self.inconclusive
        );
        out.push_str(&format!(
            "wall {:.1} ms  per case {:.3} ms mean, {:.3} ms std\n",
            self.wall_ms, self.case_ms_mean, self.case_ms_std
        ));
        if !self.violating_ordinals.is_empty() {
            out.push_str(&format!("violating ordinals {:?}\n", self.violating_ordinals));
        }
        if self.stopped_early {
            out.push_str("stopped at first violation\n");
        }
        out
    }
}

pub fn run_case(record: &OfflineRecord, sim: &SimOptions) -> CaseResult {
    let started = Instant::now();
    let run = execute(&record.testcase, &ChainedBftAdapter::default(), sim);
    let elapsed = started.elapsed();
    let log = run.report.verdict.is_violation().then(|| RunLog::new(&record.testcase, sim, &run));
    CaseResult {
        ordinal: record.ordinal,
        verdict: run.report.verdict.clone(),
        elapsed,
        honest_commits: run.report.honest_commits(),
        log,
    }
}

/// Runs `records` batch by batch. `on_result` sees every result in ordinal
/// order; with `stop_on_violation` nothing after the first violation is
/// reported.
pub fn run_campaign<I, F>(records: I, opts: &CampaignOptions, mut on_result: F) -> CampaignSummary
where
    I: Iterator<Item = OfflineRecord>,
    F: FnMut(&CaseResult),
{
    let started = Instant::now();
    let mut summary = CampaignSummary::default();
    let mut times = Vec::new();
    let mut records = records.peekable();
    let batch = opts.batch.max(1);
    'outer: while records.peek().is_some() {
        let chunk: Vec<OfflineRecord> = records.by_ref().take(batch).collect();
        let mut results: Vec<CaseResult> = chunk.par_iter().map(|r| run_case(r, &opts.sim)).collect();
        results.sort_by_key(|r| r.ordinal);
        for result in results {
            summary.cases += 1;
            times.push(result.elapsed.as_secs_f64() * 1e3);
            match &result.verdict {
                Verdict::Safe => summary.safe += 1,
                Verdict::SafetyViolation { .. } => summary.safety_violations += 1,
                Verdict::LivenessViolation { .. } => summary.liveness_violations += 1,
                Verdict::Inconclusive { .. } => summary.inconclusive += 1,
            }
            let violated = result.verdict.is_violation();
            if violated {
                summary.violating_ordinals.push(result.ordinal);
            }
            on_result(&result);
            if violated && opts.stop_on_violation {
                summary.stopped_early = true;
                break 'outer;
            }
        }
    }
    summary.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    (summary.case_ms_mean, summary.case_ms_std) = mean_std(&times);
    summary
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GeneratorConfig};

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn results_arrive_in_ordinal_order_across_batches() {
        let cfg = GeneratorConfig::new(4, 1, 2, 4);
        let opts = CampaignOptions { batch: 4, ..CampaignOptions::default() };
        let mut seen = Vec::new();
        let summary = run_campaign(generate(&cfg).unwrap(), &opts, |r| seen.push(r.ordinal));
        assert_eq!(summary.cases, 15);
        assert_eq!(seen, (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn stop_on_violation_truncates() {
        let mut cfg = GeneratorConfig::new(4, 1, 2, 7);
        cfg.mutation = crate::consensus::MutationConfig::quorum_2f(4);
        let opts = CampaignOptions { stop_on_violation: true, batch: 3, ..CampaignOptions::default() };
        let mut last = None;
        let summary = run_campaign(generate(&cfg).unwrap(), &opts, |r| last = Some(r.clone()));
        assert!(summary.stopped_early);
        assert_eq!(summary.violations(), 1);
        let last = last.unwrap();
        assert!(last.verdict.is_violation());
        assert!(last.log.is_some());
    }
}
