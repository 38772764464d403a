// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! `twins`: generate, run and replay testcases.
//!
//! Exit codes: 0 when nothing was violated, 1 when a run found a violation
//! (or a replay disagreed with its expected outcome), 2 on usage or I/O errors.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twins_forge::campaign::{run_campaign, CampaignOptions};
use twins_forge::consensus::MutationConfig;
use twins_forge::executor::{replay_attack, AttackName, RunLog, SimOptions};
use twins_forge::generator::{
    dry_run_stats, generate, read_offline, shard, write_offline, ArrangeMode, GeneratorConfig, LeaderPool,
    OfflineRecord, StageFilter,
};

const CLEAN: u8 = 0;
const VIOLATION: u8 = 1;
const FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "twins", version, about = "Twins-style testing for BFT consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate testcases and execute them.
    Run(RunArgs),
    /// Count testcases per stage without generating them.
    DryRun(GenArgs),
    /// Write generated testcases as JSON lines.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        offline_out: Option<PathBuf>,
    },
    /// Replay one of the scripted attack scenarios.
    Replay {
        #[arg(value_parser = parse_attack)]
        name: AttackName,
        /// Print the verdict only.
        #[arg(long)]
        quiet: bool,
    },
    /// Re-execute a run log and check it reproduces.
    ReplayLog { file: PathBuf },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    twins: usize,
    #[arg(long, default_value_t = 2)]
    partitions: usize,
    #[arg(long, default_value_t = 7)]
    rounds: usize,
    #[arg(long, value_enum, default_value_t = Mode::Static)]
    mode: Mode,
    /// Testcases drawn in random mode.
    #[arg(long, default_value_t = 1000)]
    sample_size: usize,
    #[arg(long, value_enum, default_value_t = Leaders::Targets)]
    leaders: Leaders,
    /// all, first:N or random:N
    #[arg(long, default_value = "all", value_parser = parse_filter)]
    filter_step2: StageFilter,
    #[arg(long, default_value = "all", value_parser = parse_filter)]
    filter_step3: StageFilter,
    #[arg(long, env = "TWINS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mutation::None)]
    mutation: Mutation,
    /// Drop testcases whose last round cannot form a quorum.
    #[arg(long)]
    require_quorum: bool,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long, default_value_t = 0)]
    shard_index: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, value_enum, default_value_t = Protocol::ChainedBft)]
    protocol: Protocol,
    /// Read testcases from a JSON-lines file instead of generating them.
    #[arg(long)]
    offline_in: Option<PathBuf>,
    /// Also write the executed testcases as JSON lines.
    #[arg(long)]
    offline_out: Option<PathBuf>,
    /// Print stage counts and exit.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    stop_on_violation: bool,
    /// Judge twins' commits as well.
    #[arg(long)]
    strict: bool,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    /// Where the summary and violation logs go.
    #[arg(long, default_value = "twins-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    WithoutReplacement,
    WithReplacement,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Leaders {
    Targets,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mutation {
    None,
    #[value(name = "quorum-2f")]
    Quorum2f,
    VoteEqualRound,
    FreezePreferredRound,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    ChainedBft,
    Zyzzyva,
    Fab,
    Synchs,
    TendermintLinear,
}

fn parse_attack(s: &str) -> Result<AttackName, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_filter(s: &str) -> Result<StageFilter, String> {
    let count = |n: &str| n.parse::<usize>().map_err(|e| format!("bad count {n:?}: {e}"));
    match s.split_once(':') {
        None if s == "all" => Ok(StageFilter::All),
        Some(("first", n)) => Ok(StageFilter::First { count: count(n)? }),
        Some(("random", n)) => Ok(StageFilter::Random { count: count(n)? }),
        _ => Err(format!("expected all, first:N or random:N, got {s:?}")),
    }
}

impl GenArgs {
    fn config(&self) -> GeneratorConfig {
        let mut cfg = GeneratorConfig::new(self.nodes, self.twins, self.partitions, self.rounds);
        cfg.mode = match self.mode {
            Mode::Static => ArrangeMode::Static,
            Mode::WithoutReplacement => ArrangeMode::PermuteWithoutReplacement,
            Mode::WithReplacement => ArrangeMode::PermuteWithReplacement,
            Mode::Random => ArrangeMode::RandomPerRound { sample_size: self.sample_size },
        };
        cfg.leader_pool = match self.leaders {
            Leaders::Targets => LeaderPool::Targets,
            Leaders::All => LeaderPool::AllAuthors,
        };
        cfg.filter_step2 = self.filter_step2;
        cfg.filter_step3 = self.filter_step3;
        cfg.seed = self.seed;
        cfg.mutation = match self.mutation {
            Mutation::None => MutationConfig::none(),
            Mutation::Quorum2f => MutationConfig::quorum_2f(self.nodes),
            Mutation::VoteEqualRound => MutationConfig::equal_round_votes(),
            Mutation::FreezePreferredRound => MutationConfig::frozen_preferred_round(),
        };
        cfg.require_eventual_quorum = self.require_quorum;
        cfg
    }

    fn records(&self) -> Result<Box<dyn Iterator<Item = OfflineRecord> + Send>, String> {
        let stream = generate(&self.config()).map_err(|e| e.to_string())?;
        let sharded = shard(stream, self.shards, self.shard_index).map_err(|e| e.to_string())?;
        Ok(Box::new(sharded))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::DryRun(gen) => cmd_dry_run(&gen),
        Command::Generate { gen, offline_out } => cmd_generate(&gen, offline_out.as_deref()),
        Command::Replay { name, quiet } => Ok(cmd_replay(name, quiet)),
        Command::ReplayLog { file } => cmd_replay_log(&file),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("twins: {msg}");
            ExitCode::from(FAILURE)
        }
    }
}

fn cmd_dry_run(gen: &GenArgs) -> Result<u8, String> {
    let cfg = gen.config();
    let stats = dry_run_stats(&cfg).map_err(|e| e.to_string())?;
    print!("{}", stats.render(&cfg));
    Ok(CLEAN)
}

fn cmd_generate(gen: &GenArgs, out: Option<&Path>) -> Result<u8, String> {
    let records = gen.records()?;
    let written = match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            write_offline(BufWriter::new(file), records)
        }
        None => write_offline(io::stdout().lock(), records),
    }
    .map_err(|e| e.to_string())?;
    eprintln!("wrote {written} testcases");
    Ok(CLEAN)
}

fn cmd_run(args: RunArgs) -> Result<u8, String> {
    if args.protocol != Protocol::ChainedBft {
        return Err("only chained-bft runs generated testcases; use `twins replay <name>` for the others".into());
    }
    if args.dry_run {
        return cmd_dry_run(&args.gen);
    }
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| e.to_string())?;
    }
    let records: Box<dyn Iterator<Item = OfflineRecord> + Send> = match &args.offline_in {
        Some(path) => {
            let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let parsed: Result<Vec<_>, _> = read_offline(BufReader::new(file)).collect();
            let parsed = parsed.map_err(|e| format!("{}: {e}", path.display()))?;
            Box::new(parsed.into_iter())
        }
        None => args.gen.records()?,
    };

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let mut offline = match &args.offline_out {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(|e| format!("{}: {e}", path.display()))?)),
        None => None,
    };
    // The offline copy has to be written before the records move into the pool.
    let records: Box<dyn Iterator<Item = OfflineRecord>> = match offline.as_mut() {
        Some(w) => {
            let all: Vec<OfflineRecord> = records.collect();
            write_offline(w, all.clone()).map_err(|e| e.to_string())?;
            Box::new(all.into_iter())
        }
        None => records,
    };

    let opts = CampaignOptions {
        sim: SimOptions { strict_safety: args.strict, ..SimOptions::default() },
        stop_on_violation: args.stop_on_violation,
        ..CampaignOptions::default()
    };
    let mut write_err = None;
    let summary = run_campaign(records, &opts, |result| {
        if let Some(log) = &result.log {
            println!("case {}: {}", result.ordinal, result.verdict);
            let path = args.out.join(format!("violation-{:06}.json", result.ordinal));
            if let Err(e) = log.write(&path) {
                write_err.get_or_insert(format!("{}: {e}", path.display()));
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let summary_path = args.out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    fs::write(&summary_path, json).map_err(|e| format!("{}: {e}", summary_path.display()))?;
    print!("{}", summary.render());
    Ok(if summary.violations() > 0 { VIOLATION } else { CLEAN })
}

fn cmd_replay(name: AttackName, quiet: bool) -> u8 {
    let out = replay_attack(name);
    let stdout = io::stdout();
    let mut w = stdout.lock();
    if !quiet {
        for line in &out.trace {
            let _ = writeln!(w, "{line}");
        }
        let _ = writeln!(w, "{}", out.report.render_commits());
    }
    let _ = writeln!(w, "{name}: {}", out.report.verdict);
    if out.matches_expected() {
        CLEAN
    } else {
        let _ = writeln!(w, "{name}: expected {}", name.expected_verdict());
        VIOLATION
    }
}

fn cmd_replay_log(path: &Path) -> Result<u8, String> {
    let log = RunLog::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    match log.replay() {
        Ok(run) => {
            println!("reproduced: {}", run.report.verdict);
            Ok(CLEAN)
        }
        Err(e) => {
            println!("{e}");
            Ok(VIOLATION)
        }
    }
}
