// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use twins_forge::consensus::MutationConfig;
use twins_forge::executor::{
    execute_chained, is_safe, replay_attack, AttackName, InstanceLog, LivenessCheck, Restart, RunLog, SafetyDetail,
    SimOptions, TestCase, Verdict,
};
use twins_forge::generator::{
    dry_run_stats, enumerate_partitions, generate, stirling2, ArrangeMode, GeneratorConfig, LeaderPool, OfflineRecord,
};
use twins_forge::net::{AuthorId, NodeId, Partition};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn ids(v: &[usize]) -> Vec<NodeId> {
    v.iter().copied().map(NodeId).collect()
}

/// Brute-force safety oracle: of any two logs, the shorter id sequence is a
/// prefix of the longer one.
fn prefix_oracle(logs: &[InstanceLog]) -> bool {
    let seqs: Vec<Vec<&str>> = logs.iter().map(|l| l.entries.iter().map(|e| e.id.as_str()).collect()).collect();
    seqs.iter().all(|a| {
        seqs.iter().all(|b| {
            let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
            long.starts_with(short)
        })
    })
}

fn oracle_agrees(logs: &[InstanceLog]) -> bool {
    let honest: Vec<InstanceLog> = logs.iter().filter(|l| l.honest).cloned().collect();
    is_safe(logs).is_ok() == prefix_oracle(logs) && is_safe(&honest).is_ok() == prefix_oracle(&honest)
}

/// Rounds to one significant digit: (mantissa, exponent).
fn one_digit(v: u128) -> (u32, u32) {
    let exp = v.to_string().len() as u32 - 1;
    let lead = (v as f64 / 10f64.powi(exp as i32)).round() as u32;
    if lead == 10 {
        (1, exp + 1)
    } else {
        (lead, exp)
    }
}

fn falling(n: u128, k: u32) -> u128 {
    (0..k as u128).map(|i| n - i).product()
}

// Table of generator counts: nodes, twins, partitions, rounds, step 1,
// step 2, then step 3 without/with replacement as (mantissa, exponent).
type Row = (usize, usize, usize, usize, u128, u128, (u32, u32), (u32, u32));

const TABLE: [Row; 8] = [
    (4, 1, 2, 4, 15, 15, (3, 4), (5, 4)),
    (4, 1, 3, 4, 25, 25, (3, 5), (4, 5)),
    (4, 1, 2, 7, 15, 15, (3, 7), (2, 8)),
    (4, 1, 3, 7, 25, 25, (2, 9), (6, 9)),
    (7, 2, 2, 4, 255, 510, (7, 10), (7, 10)),
    (7, 2, 3, 4, 3025, 6050, (1, 10), (1, 15)),
    (7, 2, 2, 7, 255, 510, (9, 18), (9, 18)),
    (7, 2, 3, 7, 3025, 6050, (3, 26), (3, 26)),
];

fn combinatorics() -> Check {
    let mut typos = Vec::new();
    for (n, t, p, r, step1, step2, without, with) in TABLE {
        let cfg = GeneratorConfig::new(n, t, p, r);
        let stats = dry_run_stats(&cfg).map_err(|e| e.to_string())?;
        let row = format!("({n},{t},{p},R={r})");
        ensure!(stats.step1.to_string() == step1.to_string(), "{row} step 1 {} != {step1}", stats.step1);
        ensure!(stats.step2.to_string() == step2.to_string(), "{row} step 2 {} != {step2}", stats.step2);
        ensure!(stats.step3_static.to_string() == step2.to_string(), "{row} static {}", stats.step3_static);
        let perm = falling(step2, r as u32);
        let power = step2.pow(r as u32);
        ensure!(stats.step3_without_replacement.to_string() == perm.to_string(), "{row} P({step2},{r}) mismatch");
        ensure!(stats.step3_with_replacement.to_string() == power.to_string(), "{row} {step2}^{r} mismatch");
        ensure!(one_digit(power) == with, "{row} with replacement {:?} vs table {with:?}", one_digit(power));
        if one_digit(perm) != without {
            typos.push(format!("{row} P={perm} vs table {}e{}", without.0, without.1));
        }
    }
    // Only the (7,2,3,R=4) cell is off, by five orders of magnitude.
    ensure!(typos.len() == 1 && typos[0].starts_with("(7,2,3,R=4)"), "unexpected mismatches {typos:?}");
    Ok(format!("8 rows exact; documented typo: {}", typos[0]))
}

struct Harvest {
    violating: Vec<TestCase>,
}

fn run_generated(cfg: &GeneratorConfig) -> Result<Vec<(OfflineRecord, twins_forge::executor::RunOutput)>, String> {
    let records: Vec<OfflineRecord> = generate(cfg).map_err(|e| e.to_string())?.collect();
    Ok(records
        .into_par_iter()
        .map(|r| {
            let out = execute_chained(&r.testcase);
            (r, out)
        })
        .collect())
}

fn base_case(h: &mut Harvest) -> Check {
    let cfg = GeneratorConfig::new(4, 2, 2, 7);
    let runs = run_generated(&cfg)?;
    ensure!(runs.len() == 62, "enumerated {} testcases, want 62", runs.len());
    ensure!(runs.iter().all(|(_, o)| oracle_agrees(&o.report.logs)), "prefix oracle disagrees");
    let bad: Vec<_> = runs.iter().filter(|(_, o)| matches!(o.report.verdict, Verdict::SafetyViolation { .. })).collect();
    ensure!(!bad.is_empty(), "no safety violation in 62 cases");
    h.violating.extend(bad.iter().map(|(r, _)| r.testcase.clone()));
    Ok(format!("62 testcases, {} safety violations (expected 8)", bad.len()))
}

fn quorum_2f(h: &mut Harvest) -> Check {
    let mut cfg = GeneratorConfig::new(4, 1, 2, 7);
    cfg.mutation = MutationConfig::quorum_2f(4);
    let runs = run_generated(&cfg)?;
    ensure!((14..=15).contains(&runs.len()), "{} testcases, want 14 or 15", runs.len());
    ensure!(runs.iter().all(|(_, o)| oracle_agrees(&o.report.logs)), "prefix oracle disagrees");
    let mut violations = 0;
    for (rec, out) in &runs {
        let Verdict::SafetyViolation { detail } = &out.report.verdict else { continue };
        violations += 1;
        let split = &rec.testcase.round_partitions[&1];
        let mut sizes: Vec<usize> = split.cells().iter().map(Vec::len).collect();
        sizes.sort();
        ensure!(sizes == [2, 3], "case {}: split {sizes:?}", rec.ordinal);
        ensure!(!split.connected(NodeId(0), NodeId(4)), "case {}: A and A' share a cell", rec.ordinal);
        let SafetyDetail::Divergence { left, right, position, .. } = detail else {
            return Err(format!("case {}: {detail}", rec.ordinal));
        };
        let height = |label: &str| {
            out.report.logs.iter().find(|l| l.label == *label).map(|l| l.entries[*position].height)
        };
        ensure!(height(left) == height(right), "case {}: heights differ", rec.ordinal);
        h.violating.push(rec.testcase.clone());
    }
    ensure!(violations >= 1, "no violation");
    Ok(format!("{} testcases, {violations} violations, all A|A' 2/3 splits diverging at one height", runs.len()))
}

fn equal_round() -> Result<(String, TestCase), String> {
    let mut tc = TestCase::fixed(4, vec![AuthorId(0)], Partition::fully_connected(5), vec![AuthorId(0)], 7, 591);
    tc.delivery_jitter = 4;
    let clean = execute_chained(&tc);
    ensure!(clean.report.verdict == Verdict::Safe, "unmutated run: {}", clean.report.verdict);
    tc.mutation = MutationConfig::equal_round_votes();
    let out = execute_chained(&tc);
    ensure!(matches!(out.report.verdict, Verdict::SafetyViolation { .. }), "mutated run: {}", out.report.verdict);
    Ok((format!("0 partitions, leaders A/A': {}", out.report.verdict), tc))
}

fn frozen_preferred_round() -> Result<(String, TestCase), String> {
    let mut tc = TestCase::fixed(4, vec![AuthorId(0)], Partition::fully_connected(5), vec![AuthorId(0)], 12, 7);
    tc.round_partitions = BTreeMap::from([
        (1, Partition::new(vec![ids(&[1, 2, 3, 4]), ids(&[0])])),
        (7, Partition::new(vec![ids(&[0]), ids(&[4]), ids(&[1, 2, 3])])),
    ]);
    tc.restarts = vec![Restart { node: NodeId(4), at_round: 7 }];
    let clean = execute_chained(&tc);
    ensure!(clean.report.verdict == Verdict::Safe, "unmutated run: {}", clean.report.verdict);
    ensure!(clean.report.honest_commits() > 0, "unmutated run commits nothing");
    tc.mutation = MutationConfig::frozen_preferred_round();
    let out = execute_chained(&tc);
    let Verdict::SafetyViolation { detail } = &out.report.verdict else {
        return Err(format!("mutated run: {}", out.report.verdict));
    };
    ensure!(matches!(detail, SafetyDetail::Rewrite { height: 1, .. }), "not a rewrite from genesis: {detail}");
    Ok((format!("restart of A' at round 7: {detail}"), tc))
}

fn replays() -> Check {
    let mut notes = Vec::new();
    for name in AttackName::ALL {
        let out = replay_attack(name);
        ensure!(out.matches_expected(), "{name}: {}", out.report.verdict);
        let has = |line: &str| out.trace.iter().any(|l| l == line);
        match name {
            AttackName::Zyzzyva => {
                let Verdict::SafetyViolation { detail: SafetyDetail::Rewrite { first, second, .. } } = &out.report.verdict
                else {
                    return Err(format!("zyzzyva: {}", out.report.verdict));
                };
                ensure!(first == "v2" && second == "v1", "zyzzyva rewrote {first} with {second}");
                ensure!(has("[E] committed v2 in view 2") && has("[E] committed v1 in view 3"), "zyzzyva commit views");
            }
            AttackName::Fab => {
                ensure!(has("[A] view 2: progress certificate vouches for no value"), "fab: vouched set not empty");
            }
            AttackName::Synchs => {
                let golden = [
                    "[A] t=3 proposes v1 extending v0",
                    "[D] t=6 quits view 1",
                    "[C] t=7 certifies v1 from view 1",
                    "[B'] t=8 proposes v1' extending v0",
                    "[D] t=9 certifies v1 from view 1",
                    "[C] t=10 does not vote for v1': it does not extend cc(v1)",
                    "[D] t=12 commits v1'",
                ];
                for line in golden {
                    ensure!(has(line), "synchs trace lacks {line:?}");
                }
                ensure!(
                    matches!(&out.report.verdict, Verdict::SafetyViolation { detail: SafetyDetail::Uncertified { committed, certified, .. } } if committed == "v1'" && certified == "v1"),
                    "synchs: {}",
                    out.report.verdict
                );
            }
            AttackName::Tendermint => {
                let LivenessCheck::Violated { rounds } = &out.report.liveness else {
                    return Err(format!("tendermint liveness {:?}", out.report.liveness));
                };
                ensure!(rounds.len() >= 2 && rounds.windows(2).all(|w| w[1] == w[0] + 1), "rounds {rounds:?}");
                let decided = out.report.logs.iter().filter(|l| l.honest).flat_map(|l| &l.entries).any(|e| rounds.contains(&e.round));
                ensure!(!decided, "tendermint decided inside {rounds:?}");
            }
        }
        notes.push(format!("{name}={}", out.report.verdict.name()));
    }
    Ok(notes.join(" "))
}

fn no_quorum() -> Check {
    let split = Partition::new(vec![ids(&[0, 4, 1]), ids(&[2, 3])]);
    let tc = TestCase::fixed(4, vec![AuthorId(0)], split, vec![AuthorId(0), AuthorId(3)], 10, 1);
    let out = execute_chained(&tc);
    ensure!(out.report.total_commits() == 0, "{} commits", out.report.total_commits());
    ensure!(!matches!(out.report.verdict, Verdict::SafetyViolation { .. }), "{}", out.report.verdict);
    Ok(format!("0 commits, verdict {}", out.report.verdict))
}

fn clean_protocol() -> Check {
    let mut records = Vec::new();
    for (n, t, p, size, seed) in [(4, 1, 2, 4000, 11), (4, 1, 3, 3000, 12), (7, 2, 2, 3000, 13)] {
        let mut cfg = GeneratorConfig::new(n, t, p, 7);
        cfg.mode = ArrangeMode::RandomPerRound { sample_size: size };
        cfg.leader_pool = LeaderPool::AllAuthors;
        cfg.seed = seed;
        records.extend(generate(&cfg).map_err(|e| e.to_string())?);
    }
    ensure!(records.len() >= 10_000, "only {} testcases", records.len());
    let failures: Vec<String> = records
        .par_iter()
        .filter_map(|r| {
            let out = execute_chained(&r.testcase);
            if matches!(out.report.verdict, Verdict::SafetyViolation { .. }) {
                return Some(format!("violation: {}", out.report.verdict));
            }
            (!oracle_agrees(&out.report.logs)).then(|| "prefix oracle disagrees".to_string())
        })
        .collect();
    ensure!(failures.is_empty(), "{} failures, first {}", failures.len(), failures[0]);

    // Stirling numbers by the recurrence, against both the closed form and
    // the enumerator.
    let mut s = vec![vec![0u64; 11]; 11];
    s[0][0] = 1;
    for n in 1..=10 {
        for k in 1..=n {
            s[n][k] = k as u64 * s[n - 1][k] + s[n - 1][k - 1];
        }
    }
    for n in 1..=10 {
        for k in 1..=n {
            ensure!(stirling2(n, k).to_string() == s[n][k].to_string(), "S({n},{k}) closed form");
            let parts: BTreeSet<Vec<Vec<usize>>> = enumerate_partitions(n, k)
                .map_err(|e| e.to_string())?
                .map(|p| {
                    let mut cells: Vec<Vec<usize>> =
                        p.cells().iter().map(|c| c.iter().map(|x| x.0).collect()).collect();
                    cells.iter_mut().for_each(|c| c.sort());
                    cells.sort();
                    cells
                })
                .collect();
            ensure!(parts.len() as u64 == s[n][k], "enumerated {} partitions of {n} into {k}", parts.len());
        }
    }
    Ok(format!("{} sampled cases safe, oracle agrees; S(n,k) matches for n <= 10", records.len()))
}

fn determinism(cases: &[TestCase]) -> Check {
    ensure!(!cases.is_empty(), "no violating cases to replay");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = SimOptions::default();
    for (i, tc) in cases.iter().enumerate() {
        let run = execute_chained(tc);
        let path = dir.path().join(format!("case-{i}.json"));
        RunLog::new(tc, &opts, &run).write(&path).map_err(|e| e.to_string())?;
        let log = RunLog::read(&path).map_err(|e| e.to_string())?;
        let again = log.replay().map_err(|e| format!("case {i}: {e}"))?;
        ensure!(again.events == run.events && again.report.verdict == run.report.verdict, "case {i} differs");
    }
    Ok(format!("{} violating run logs replay identically", cases.len()))
}

#[test]
fn acceptance() {
    let mut h = Harvest { violating: Vec::new() };
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    results.push((1, "combinatorics", combinatorics()));
    results.push((2, "base-case violation", base_case(&mut h)));
    results.push((3, "quorum-2f mutation", quorum_2f(&mut h)));
    let equal = equal_round().map(|(msg, tc)| {
        h.violating.push(tc);
        msg
    });
    results.push((4, "equal-round votes", equal));
    let frozen = frozen_preferred_round().map(|(msg, tc)| {
        h.violating.push(tc);
        msg
    });
    results.push((5, "frozen preferred round", frozen));
    results.push((6, "attack replays", replays()));
    results.push((7, "no-quorum regression", no_quorum()));
    results.push((8, "clean protocol", clean_protocol()));
    results.push((9, "determinism", determinism(&h.violating)));

    // Written to stderr directly so the lines show even when output is captured.
    let mut err = std::io::stderr().lock();
    let mut failed = 0;
    for (n, name, res) in &results {
        let line = match res {
            Ok(msg) => format!("PASS {n} {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                format!("FAIL {n} {name}: {msg}")
            }
        };
        writeln!(err, "{line}").unwrap();
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
