use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use arena_cli::commands::{leaderboard_path, log_path};
use arena_cli::config::Config;
use arena_cli::{cmd_analyze, cmd_arena, cmd_prompts, cmd_replay, cmd_simulate};
use arena_core::evaluators::Dimension;
use arena_core::sim::SystemKind;

fn arena_cfg(out: &Path) -> Config {
    let mut cfg = Config::default();
    cfg.out_dir = out.to_path_buf();
    cfg.arena.rounds = 300;
    cfg.arena.dimensions = vec![Dimension::Alignment, Dimension::Perceptual, Dimension::Aesthetic];
    cfg
}

#[test]
fn smoke_grid_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.simulate.systems = vec![SystemKind::Ours, SystemKind::Elo];
    cfg.simulate.trial.n_trials = 3;
    cfg.simulate.set_rounds(500);

    let started = Instant::now();
    let (report, out) = cmd_simulate(&cfg).unwrap();
    assert!(started.elapsed().as_secs() < 60);

    assert_eq!(report.summaries.len(), 2);
    let long = fs::read_to_string(&out.long_csv).unwrap();
    for metric in [
        "srcc@500",
        "kendall@500",
        "top1_overlap@500",
        "top3_overlap@500",
        "discovery_latency",
        "discovery_success",
    ] {
        assert!(long.contains(&format!(",{metric},")), "missing {metric}");
    }
    let wide = fs::read_to_string(&out.wide_csv).unwrap();
    assert_eq!(wide.lines().count(), 3);
    assert!(out.json.exists());
}

#[test]
fn same_seed_same_leaderboards() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    cmd_arena(&arena_cfg(&a), false).unwrap();
    cmd_arena(&arena_cfg(&b), false).unwrap();
    for dim in [Dimension::Alignment, Dimension::Perceptual, Dimension::Aesthetic] {
        assert_eq!(
            fs::read(leaderboard_path(&a, dim, None)).unwrap(),
            fs::read(leaderboard_path(&b, dim, None)).unwrap()
        );
        assert_eq!(
            fs::read(leaderboard_path(&a, dim, Some(150))).unwrap(),
            fs::read(leaderboard_path(&b, dim, Some(150))).unwrap()
        );
    }
}

#[test]
fn reloaded_config_behaves_identically() {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    let cfg = arena_cfg(&first);
    cmd_arena(&cfg, false).unwrap();

    let mut reloaded = Config::load(&first.join("effective_config.json")).unwrap();
    assert_eq!(reloaded, cfg);
    let second = root.path().join("second");
    reloaded.out_dir = second.clone();
    cmd_arena(&reloaded, false).unwrap();
    assert_eq!(
        fs::read(leaderboard_path(&first, Dimension::Alignment, None)).unwrap(),
        fs::read(leaderboard_path(&second, Dimension::Alignment, None)).unwrap()
    );
}

#[test]
fn crashed_log_is_a_replayable_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = arena_cfg(dir.path());
    cmd_arena(&cfg, false).unwrap();
    let log = log_path(dir.path(), Dimension::Perceptual);
    let text = fs::read(&log).unwrap();
    // cut inside the final snapshot, then inside an earlier match record
    for cut in [text.len() - 10, text.len() * 2 / 3] {
        fs::write(&log, &text[..cut]).unwrap();
        let verdict = cmd_replay(&log).unwrap();
        assert!(verdict.rounds > 0 && verdict.rounds <= 300);
    }
    let resumed = cmd_arena(&cfg, true).unwrap();
    assert!(resumed.iter().all(|s| s.rounds == 300));
    assert!(cmd_replay(&log).unwrap().matches);
}

#[test]
fn resume_refuses_a_different_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = arena_cfg(dir.path());
    cfg.arena.rounds = 40;
    cmd_arena(&cfg, false).unwrap();
    cfg.seed += 1;
    cfg.arena.rounds = 80;
    assert!(cmd_arena(&cfg, true).is_err());
}

#[test]
fn prompts_resume_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.prompts.count = 30;
    let first = cmd_prompts(&cfg, false).unwrap();
    assert_eq!((first.first_id, first.written), (0, 30));
    assert!(cmd_prompts(&cfg, false).is_err());
    let second = cmd_prompts(&cfg, true).unwrap();
    assert_eq!(second.first_id, 30);

    let report = cmd_analyze(&second.path, None).unwrap();
    assert_eq!(report.records, 60);
    assert_eq!(report.malformed, 0);
    assert_eq!(report.polluted_records, 0);
}

#[test]
fn binary_runs_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let arena = |args: &[&str]| {
        let output = Command::new(env!("CARGO_BIN_EXE_arena"))
            .args(["--out-dir", out, "--seed", "9"])
            .args(args)
            .output()
            .unwrap();
        assert!(output.status.success(), "{args:?}: {}", String::from_utf8_lossy(&output.stderr));
        String::from_utf8(output.stdout).unwrap()
    };
    let text = arena(&["arena", "--rounds", "60", "--dimension", "aesthetic"]);
    assert!(text.contains("\"dimension\": \"aesthetic\""));
    let text = arena(&["replay", &format!("{out}/arena_aesthetic.jsonl")]);
    assert!(text.contains("\"matches\": true"));
    arena(&["prompts", "--count", "12"]);
    let text = arena(&["analyze", &format!("{out}/prompts.jsonl")]);
    assert!(text.contains("\"records\": 12"));
    let text = arena(&["simulate", "--rounds", "120", "--trials", "1"]);
    assert!(text.starts_with("environment,system"));

    let bad = Command::new(env!("CARGO_BIN_EXE_arena"))
        .args(["--out-dir", out, "replay", "/nonexistent/log.jsonl"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
