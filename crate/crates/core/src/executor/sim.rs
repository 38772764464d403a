// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use super::report::{ExecutionReport, Verdict};
use super::testcase::{Restart, TestCase};
use super::verdict::{check_liveness, check_safety, default_timely_rounds, InstanceLog, LivenessCheck};
use crate::consensus::{ChainedBft, LeaderSchedule, MutationConfig, NodeConfig};
use crate::net::{
    AuthorId, Envelope, MessageKind, EventLog, EventQueue, EventRecord, InstanceTable, LogDecision, NodeId, Round,
    RoundSchedule, RouteDecision, Tick, WireMessage,
};
use crate::protocol::{Action, CommitEntry, Protocol, TimerToken};

/// What an adapter needs to build one instance.
pub struct InstanceSpec<'a> {
    pub node: NodeId,
    pub author: AuthorId,
    pub num_authors: usize,
    pub seed: u64,
    pub leaders: &'a LeaderSchedule,
    pub mutation: &'a MutationConfig,
}

pub trait ProtocolAdapter {
    type Instance: Protocol;

    fn init(&self, spec: &InstanceSpec<'_>) -> Self::Instance;

    /// Rounds between a proposal and the decision it can produce.
    fn decision_lag(&self) -> u64;
}

#[derive(Clone, Debug)]
pub struct ChainedBftAdapter {
    pub timeout_base: Tick,
}

impl Default for ChainedBftAdapter {
    fn default() -> Self {
        Self { timeout_base: 12 }
    }
}

impl ProtocolAdapter for ChainedBftAdapter {
    type Instance = ChainedBft;

    fn init(&self, spec: &InstanceSpec<'_>) -> ChainedBft {
        ChainedBft::new(NodeConfig {
            node: spec.node,
            author: spec.author,
            num_authors: spec.num_authors,
            seed: spec.seed,
            leaders: spec.leaders.clone(),
            mutation: spec.mutation.clone(),
            timeout_base: self.timeout_base,
        })
    }

    fn decision_lag(&self) -> u64 {
        3
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Compare twins' logs too when judging safety.
    pub strict_safety: bool,
    /// Hard stop in ticks, independent of the message budget.
    pub max_ticks: Tick,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { strict_safety: false, max_ticks: 100_000 }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: ExecutionReport,
    pub events: EventLog,
}

/// Instance seed: distinct for every (testcase seed, node, incarnation).
pub fn instance_seed(seed: u64, node: NodeId, incarnation: u32) -> u64 {
    let mut x = seed ^ (node.0 as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((incarnation as u64) << 48);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

enum Event<M> {
    Message(Envelope<M>),
    Timer { node: NodeId, token: TimerToken, epoch: u32 },
}

struct Runner<'a, A: ProtocolAdapter> {
    adapter: &'a A,
    tc: &'a TestCase,
    table: InstanceTable,
    schedule: RoundSchedule,
    leaders: LeaderSchedule,
    instances: Vec<A::Instance>,
    epochs: Vec<u32>,
    earlier_logs: Vec<Vec<CommitEntry>>,
    restarts: Vec<Restart>,
    queue: EventQueue<Event<<A::Instance as Protocol>::Message>>,
    log: EventLog,
    rng: ChaCha8Rng,
    sent: usize,
    votes_sent: usize,
    decisions_by_round: BTreeMap<Round, usize>,
    warnings: usize,
}

impl<'a, A: ProtocolAdapter> Runner<'a, A> {
    fn new(adapter: &'a A, tc: &'a TestCase, table: InstanceTable) -> Self {
        let leaders = tc.leader_schedule();
        let n = table.len();
        let mut runner = Self {
            adapter,
            tc,
            schedule: tc.schedule(),
            leaders,
            instances: Vec::with_capacity(n),
            epochs: vec![0; n],
            earlier_logs: vec![Vec::new(); n],
            restarts: tc.restarts.clone(),
            queue: EventQueue::new(),
            log: EventLog::new(),
            rng: ChaCha8Rng::seed_from_u64(tc.seed),
            sent: 0,
            votes_sent: 0,
            decisions_by_round: BTreeMap::new(),
            warnings: 0,
            table,
        };
        for node in runner.table.nodes().collect::<Vec<_>>() {
            let inst = runner.fresh(node);
            runner.instances.push(inst);
        }
        runner
    }

    fn fresh(&self, node: NodeId) -> A::Instance {
        let spec = InstanceSpec {
            node,
            author: self.table.author_of(node),
            num_authors: self.table.num_nodes(),
            seed: instance_seed(self.tc.seed, node, self.epochs[node.0]),
            leaders: &self.leaders,
            mutation: &self.tc.mutation,
        };
        self.adapter.init(&spec)
    }

    fn link(&self, src: NodeId, dst: NodeId) -> usize {
        src.0 * self.table.len() + dst.0
    }

    fn timer_link(&self, node: NodeId) -> usize {
        self.table.len() * self.table.len() + node.0
    }

    fn dispatch(&mut self, src: NodeId, now: Tick, actions: Vec<Action<<A::Instance as Protocol>::Message>>) {
        for action in actions {
            match action {
                Action::SetTimer { at, token } => {
                    let epoch = self.epochs[src.0];
                    let link = self.timer_link(src);
                    self.queue.push(at.max(now), link, Event::Timer { node: src, token, epoch }).expect("timer not in the past");
                }
                Action::Send { to, msg } => {
                    self.sent += 1;
                    if msg.kind() == MessageKind::Vote {
                        self.votes_sent += 1;
                    }
                    for dst in self.table.fan_out(&to) {
                        let env = Envelope::new(src, dst, msg.clone());
                        match self.schedule.route(src, dst, env.inferred_round) {
                            RouteDecision::Deliver => {
                                let jitter = self.tc.delivery_jitter;
                                let delay = 1 + if jitter > 0 { self.rng.gen_range(0..=jitter) } else { 0 };
                                let link = self.link(src, dst);
                                self.queue.push(now + delay, link, Event::Message(env)).expect("future tick");
                            }
                            RouteDecision::Drop(reason) => self.record(now, &env, LogDecision::Drop(reason)),
                        }
                    }
                }
            }
        }
    }

    fn record(&mut self, tick: Tick, env: &Envelope<<A::Instance as Protocol>::Message>, decision: LogDecision) {
        self.log.push(EventRecord {
            tick,
            src: env.src,
            dst: env.dst,
            kind: env.kind,
            round: env.inferred_round,
            decision,
            summary: env.body.summary(),
        });
    }

    fn track_commits(&mut self, node: NodeId, before: usize) {
        let inst = &self.instances[node.0];
        let after = inst.commit_log().len();
        if after > before && !self.table.is_twin(node) {
            *self.decisions_by_round.entry(inst.current_round()).or_default() += after - before;
        }
    }

    fn maybe_restart(&mut self, node: NodeId, now: Tick) {
        let round = self.instances[node.0].current_round();
        let Some(pos) = self.restarts.iter().position(|r| r.node == node && round >= r.at_round) else {
            return;
        };
        self.restarts.remove(pos);
        let old = self.instances[node.0].commit_log().to_vec();
        self.earlier_logs[node.0].extend(old);
        self.warnings += self.instances[node.0].notes().len();
        self.epochs[node.0] += 1;
        self.instances[node.0] = self.fresh(node);
        let actions = self.instances[node.0].start(now);
        self.dispatch(node, now, actions);
    }

    fn run(&mut self, max_ticks: Tick) {
        let budget = self.table.len() * (self.tc.round_budget as usize + 3);
        for node in self.table.nodes().collect::<Vec<_>>() {
            let actions = self.instances[node.0].start(0);
            self.dispatch(node, 0, actions);
        }
        while self.votes_sent < budget {
            let Some(ev) = self.queue.pop() else { break };
            if ev.tick > max_ticks {
                break;
            }
            let now = ev.tick;
            let node = match ev.item {
                Event::Message(env) => {
                    debug_assert_eq!(
                        self.schedule.route(env.src, env.dst, env.inferred_round),
                        RouteDecision::Deliver,
                        "message crossed a partition boundary"
                    );
                    self.record(now, &env, LogDecision::Deliver);
                    let dst = env.dst;
                    let from = self.table.author_of(env.src);
                    let before = self.instances[dst.0].commit_log().len();
                    let actions = self.instances[dst.0].on_message(from, env.body, now);
                    self.dispatch(dst, now, actions);
                    self.track_commits(dst, before);
                    dst
                }
                Event::Timer { node, token, epoch } => {
                    if epoch != self.epochs[node.0] {
                        continue;
                    }
                    let before = self.instances[node.0].commit_log().len();
                    let actions = self.instances[node.0].on_timer(token, now);
                    self.dispatch(node, now, actions);
                    self.track_commits(node, before);
                    node
                }
            };
            self.maybe_restart(node, now);
        }
    }

    fn finish(self, strict_safety: bool, decision_lag: u64) -> RunOutput {
        let logs: Vec<InstanceLog> = self
            .table
            .nodes()
            .map(|node| {
                let mut entries = self.earlier_logs[node.0].clone();
                entries.extend_from_slice(self.instances[node.0].commit_log());
                InstanceLog { label: self.table.label(node), honest: !self.table.is_twin(node), entries }
            })
            .collect();
        let elapsed_rounds = self
            .table
            .nodes()
            .filter(|n| !self.table.is_twin(*n))
            .map(|n| self.instances[n.0].current_round())
            .max()
            .unwrap_or(0);
        let completed = elapsed_rounds.saturating_sub(1);
        let timely = default_timely_rounds(&self.schedule, &self.table, completed);
        let liveness = check_liveness(&timely, &self.decisions_by_round, completed, decision_lag);
        let verdict = match check_safety(&logs, strict_safety) {
            Err(detail) => Verdict::SafetyViolation { detail },
            Ok(()) => match &liveness {
                LivenessCheck::Violated { rounds } => Verdict::LivenessViolation { rounds: rounds.clone() },
                _ => Verdict::Safe,
            },
        };
        let warnings = self.warnings + self.instances.iter().map(|i| i.notes().len()).sum::<usize>();
        let report = ExecutionReport {
            verdict,
            liveness,
            logs,
            messages_sent: self.sent,
            delivered: self.log.delivered(),
            dropped: self.log.dropped(),
            elapsed_rounds,
            ticks: self.queue.now(),
            warnings,
            trace_hash: self.log.trace_hash(),
        };
        RunOutput { report, events: self.log }
    }
}

/// Run one testcase to completion: until `instances * (round_budget + 3)`
/// votes have been emitted, the queue drains, or `max_ticks` passes.
pub fn execute<A: ProtocolAdapter>(tc: &TestCase, adapter: &A, opts: &SimOptions) -> RunOutput {
    let table = match tc.validate() {
        Ok(t) => t,
        Err(e) => {
            return RunOutput { report: ExecutionReport::inconclusive(format!("invalid testcase: {e}")), events: EventLog::new() }
        }
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        let mut runner = Runner::new(adapter, tc, table);
        runner.run(opts.max_ticks);
        runner.finish(opts.strict_safety, adapter.decision_lag())
    }));
    match result {
        Ok(out) => out,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "protocol instance panicked".into());
            RunOutput { report: ExecutionReport::inconclusive(msg), events: EventLog::new() }
        }
    }
}

/// Convenience wrapper for the chained-BFT adapter with default options.
pub fn execute_chained(tc: &TestCase) -> RunOutput {
    execute(tc, &ChainedBftAdapter::default(), &SimOptions::default())
}
