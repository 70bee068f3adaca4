use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use arena_core::evaluators::Dimension;
use arena_core::matchlog::{read_log, replay, LogEvent, LogHeader, MatchLogWriter};
use arena_core::prompts::{
    analyze_outputs, default_pollution_phrases, generate_with_retry, AnalysisOptions, AnalysisReport, CandidatePools,
    HttpRewriter, PromptWriter, Rewriter, TemplateRewriter,
};
use arena_core::scheduler::{ArenaState, LeaderboardEntry, OutcomeSource};
use arena_core::sim::environment;
use arena_core::sim::BenchmarkReport;
use arena_core::sim::run_benchmark;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Config, RewriterConfig};
use crate::providers::build_provider;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out_dir(cfg: &Config) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    write_file(&cfg.out_dir.join("effective_config.json"), cfg.to_json())
}

/// Files written by `simulate`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub long_csv: PathBuf,
    pub wide_csv: PathBuf,
    pub json: PathBuf,
}

pub fn cmd_simulate(cfg: &Config) -> Result<(BenchmarkReport, SimulateOutput)> {
    prepare_out_dir(cfg)?;
    let envs = cfg
        .simulate
        .environments
        .iter()
        .map(|n| environment(n).ok_or_else(|| anyhow!("unknown environment {n:?}")))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = cfg.simulate.trial.clone();
    spec.seed = cfg.seed;
    let report = run_benchmark(&envs, &cfg.simulate.systems, &spec, &cfg.hyper_params)?;
    let out = SimulateOutput {
        long_csv: cfg.out_dir.join("simulate_long.csv"),
        wide_csv: cfg.out_dir.join("simulate_table.csv"),
        json: cfg.out_dir.join("simulate.json"),
    };
    write_file(&out.long_csv, report.to_long_csv()?)?;
    write_file(&out.wide_csv, report.to_wide_csv()?)?;
    write_file(&out.json, serde_json::to_string_pretty(&report)?)?;
    Ok((report, out))
}

pub fn log_path(out_dir: &Path, dim: Dimension) -> PathBuf {
    out_dir.join(format!("arena_{dim}.jsonl"))
}

pub fn leaderboard_path(out_dir: &Path, dim: Dimension, round: Option<u64>) -> PathBuf {
    match round {
        Some(r) => out_dir.join(format!("leaderboard_{dim}_r{r:06}.json")),
        None => out_dir.join(format!("leaderboard_{dim}.json")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArenaSummary {
    pub dimension: Dimension,
    pub rounds: u64,
    pub resumed_from: Option<u64>,
    pub log: PathBuf,
    pub leaderboard: Vec<LeaderboardEntry>,
}

fn write_leaderboard(path: &Path, board: &[LeaderboardEntry]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(board)?;
    text.push('\n');
    write_file(path, text)
}

/// Runs one dimension's arena up to `cfg.arena.rounds` completed rounds.
pub fn run_dimension(
    cfg: &Config,
    dim: Dimension,
    resume: bool,
    source: &mut dyn OutcomeSource,
) -> Result<ArenaSummary> {
    let hp = &cfg.hyper_params;
    let path = log_path(&cfg.out_dir, dim);
    let header = LogHeader::new(dim, cfg.seed, cfg.convergence, hp);

    let (mut writer, mut state, mut last_snapshot, resumed_from) = if resume && path.exists() {
        let (writer, contents) = MatchLogWriter::resume(&path)?;
        let h = &contents.header;
        if h.seed_fingerprint != header.seed_fingerprint || h.convergence != header.convergence || h.dimension != dim {
            bail!("{} was written with a different seed or configuration", path.display());
        }
        let replayed = replay(&contents).with_context(|| format!("replaying {}", path.display()))?;
        let last = contents.events.iter().rev().find_map(|e| match e {
            LogEvent::Snapshot { round, .. } => Some(*round),
            _ => None,
        });
        log::info!("{dim}: resuming at round {}", replayed.rounds);
        (writer, replayed.state, last, Some(replayed.rounds))
    } else {
        let writer = MatchLogWriter::create(&path, header)?;
        (writer, ArenaState::with_convergence(cfg.seed, cfg.convergence), None, None)
    };

    let mut registered: BTreeSet<String> = state.ratings.keys().cloned().collect();
    let mut join_due = |state: &mut ArenaState, writer: &mut MatchLogWriter| -> Result<()> {
        for m in &cfg.arena.models {
            if m.join_round <= state.round_index && !registered.contains(&m.id) {
                state.register(&m.id, hp)?;
                writer.register(&m.id, state.rating(&m.id)?)?;
                registered.insert(m.id.clone());
            }
        }
        Ok(())
    };

    join_due(&mut state, &mut writer)?;
    while state.round_index < cfg.arena.rounds {
        let round = state.run_round(source, hp).with_context(|| format!("{dim} round {}", state.round_index + 1))?;
        writer.record_round(&round)?;
        let every = cfg.arena.snapshot_every;
        if every > 0 && state.round_index % every == 0 {
            let board = state.leaderboard(hp);
            write_leaderboard(&leaderboard_path(&cfg.out_dir, dim, Some(state.round_index)), &board)?;
            writer.snapshot(state.round_index, board)?;
            last_snapshot = Some(state.round_index);
        }
        join_due(&mut state, &mut writer)?;
    }

    let board = state.leaderboard(hp);
    if last_snapshot != Some(state.round_index) {
        writer.snapshot(state.round_index, board.clone())?;
    }
    write_leaderboard(&leaderboard_path(&cfg.out_dir, dim, None), &board)?;
    Ok(ArenaSummary {
        dimension: dim,
        rounds: state.round_index,
        resumed_from,
        log: path,
        leaderboard: board,
    })
}

/// Runs every configured dimension, each on its own thread.
pub fn cmd_arena(cfg: &Config, resume: bool) -> Result<Vec<ArenaSummary>> {
    prepare_out_dir(cfg)?;
    let mut jobs = Vec::new();
    for &dim in &cfg.arena.dimensions {
        let provider = build_provider(&cfg.arena.provider(dim), &cfg.arena.models, cfg.seed, dim)?;
        jobs.push((dim, provider));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(dim, mut provider)| s.spawn(move || run_dimension(cfg, dim, resume, provider.as_mut())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("arena worker panicked"))?)
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptsSummary {
    pub path: PathBuf,
    pub first_id: u64,
    pub written: u64,
}

pub fn cmd_prompts(cfg: &Config, resume: bool) -> Result<PromptsSummary> {
    prepare_out_dir(cfg)?;
    let p = &cfg.prompts;
    let pools = match &p.pools {
        None => CandidatePools::sample(),
        Some(path) if path.is_dir() => CandidatePools::from_dir(path)?,
        Some(path) => CandidatePools::from_json(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
    };
    let rewriter: Box<dyn Rewriter> = match &p.rewriter {
        RewriterConfig::Template => Box::new(TemplateRewriter),
        RewriterConfig::Http { url, timeout_secs } => {
            Box::new(HttpRewriter::new(url.clone(), Duration::from_secs(*timeout_secs)))
        }
    };
    let phrases = p.pollution_phrases.clone().unwrap_or_else(default_pollution_phrases);
    let path = cfg.out_dir.join(&p.output);
    let mut writer = PromptWriter::open(&path, resume)?;
    let first_id = writer.next_id();
    let mut written = 0;
    while written < p.count {
        let id = writer.next_id();
        // one stream per id keeps resumed files identical to single runs
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(id);
        let record =
            generate_with_retry(p.task, &pools, &p.policy, rewriter.as_ref(), id, p.max_attempts, &phrases, &mut rng)?;
        writer.append(&record)?;
        written += 1;
    }
    Ok(PromptsSummary { path, first_id, written })
}

pub fn cmd_analyze(path: &Path, phrases: Option<Vec<String>>) -> Result<AnalysisReport> {
    let options = AnalysisOptions {
        pollution_phrases: phrases.unwrap_or_else(default_pollution_phrases),
    };
    Ok(analyze_outputs(path, &options)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayVerdict {
    pub log: PathBuf,
    pub rounds: u64,
    pub snapshots_checked: Vec<u64>,
    pub matches: bool,
    pub message: String,
    #[serde(skip)]
    pub state: Option<ArenaState>,
}

/// Re-derives the run from its log. Any divergence from the recorded
/// decisions, posteriors or snapshots makes `matches` false.
pub fn cmd_replay(log: &Path) -> Result<ReplayVerdict> {
    let contents = read_log(log)?;
    let snapshot = contents.events.iter().rev().find_map(|e| match e {
        LogEvent::Snapshot { round, .. } => Some(*round),
        _ => None,
    });
    Ok(match replay(&contents) {
        Ok(out) => {
            let (matches, message) = match snapshot {
                Some(r) if r == out.rounds => (true, format!("{} rounds reproduced exactly", out.rounds)),
                Some(r) => (false, format!("last snapshot at round {r}, log ends at {}", out.rounds)),
                None => (false, "log has no leaderboard snapshot to compare".into()),
            };
            ReplayVerdict {
                log: log.to_path_buf(),
                rounds: out.rounds,
                snapshots_checked: out.snapshots_checked,
                matches,
                message,
                state: Some(out.state),
            }
        }
        Err(e) => ReplayVerdict {
            log: log.to_path_buf(),
            rounds: 0,
            snapshots_checked: Vec::new(),
            matches: false,
            message: e.to_string(),
            state: None,
        },
    })
}
