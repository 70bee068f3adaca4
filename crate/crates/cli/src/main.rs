use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use arena_cli::commands::{cmd_analyze, cmd_arena, cmd_prompts, cmd_replay, cmd_simulate};
use arena_cli::Config;
use arena_core::evaluators::Dimension;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arena", version, about = "Dynamic pairwise evaluation arena")]
struct Cli {
    /// JSON configuration file; defaults apply to anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation benchmark grid.
    Simulate {
        /// Dynamic rounds per trial.
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run live arena rounds and write match logs and leaderboards.
    Arena {
        #[arg(long)]
        resume: bool,
        /// Total rounds per dimension.
        #[arg(long)]
        rounds: Option<u64>,
        /// Restrict to one dimension.
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Sample prompt configurations into a JSON Lines file.
    Prompts {
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        count: Option<u64>,
    },
    /// Summarize a prompt JSON Lines file.
    Analyze { path: PathBuf },
    /// Re-derive a match log and check it against its snapshots.
    Replay { log: PathBuf },
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    let print = |v: &dyn erased::Json| emit(&v.json());
    match cli.command {
        Command::Simulate { rounds, trials } => {
            if let Some(r) = rounds {
                cfg.simulate.set_rounds(r);
            }
            if let Some(n) = trials {
                cfg.simulate.trial.n_trials = n;
            }
            let (report, out) = cmd_simulate(&cfg)?;
            emit(report.to_wide_csv()?.trim_end());
            eprintln!("wrote {}, {}, {}", out.wide_csv.display(), out.long_csv.display(), out.json.display());
        }
        Command::Arena {
            resume,
            rounds,
            dimension,
        } => {
            if let Some(r) = rounds {
                cfg.arena.rounds = r;
            }
            if let Some(d) = dimension {
                cfg.arena.dimensions = vec![d];
            }
            print(&cmd_arena(&cfg, resume)?);
        }
        Command::Prompts { resume, count } => {
            if let Some(c) = count {
                cfg.prompts.count = c;
            }
            print(&cmd_prompts(&cfg, resume)?);
        }
        Command::Analyze { path } => print(&cmd_analyze(&path, cfg.prompts.pollution_phrases.clone())?),
        Command::Replay { log } => {
            let verdict = cmd_replay(&log)?;
            print(&verdict);
            if !verdict.matches {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

// A closed stdout (e.g. piped into `head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

mod erased {
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string_pretty(self).unwrap_or_default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
