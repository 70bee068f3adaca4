//! Append-only JSON Lines log of an arena run and bit-exact replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluators::Dimension;
use crate::jsonl;
use crate::rating::{MacroVerdict, MicroBatchResult, RatingHyperParams, RatingState};
use crate::scheduler::{
    ArenaState, ConvergenceRule, LeaderboardEntry, ModelId, RoundRecord, ScheduleDecision, ScheduleError,
    ScheduleMode, SelectionTuple,
};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is locked by another writer")]
    Locked(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log has no header")]
    MissingHeader,
    #[error("unsupported log version {0}")]
    Version(u32),
    #[error("replay diverged at round {round}: {message}")]
    Mismatch { round: u64, message: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn io_err(path: &Path, source: std::io::Error) -> LogError {
    LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Milliseconds since the Unix epoch. Informational only.
pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Short stable digest of the run seed and hyperparameters (FNV-1a).
pub fn seed_fingerprint(seed: u64, hp: &RatingHyperParams) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let hp_json = serde_json::to_vec(hp).unwrap_or_default();
    for b in seed.to_le_bytes().iter().chain(hp_json.iter()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub dimension: Dimension,
    pub seed: u64,
    pub seed_fingerprint: String,
    pub convergence: ConvergenceRule,
    pub hyper_params: RatingHyperParams,
    pub timestamp: u64,
}

impl LogHeader {
    pub fn new(dimension: Dimension, seed: u64, convergence: ConvergenceRule, hp: &RatingHyperParams) -> Self {
        Self {
            version: LOG_VERSION,
            dimension,
            seed,
            seed_fingerprint: seed_fingerprint(seed, hp),
            convergence,
            hyper_params: hp.clone(),
            timestamp: now_millis(),
        }
    }
}

/// One scheduled comparison with everything needed to re-apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub round_index: u64,
    pub dimension: Dimension,
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub mode: ScheduleMode,
    pub wins_a: u32,
    pub wins_b: u32,
    pub ties: u32,
    pub p_a: f64,
    pub verdict: MacroVerdict,
    pub weight: f64,
    pub selection_tuple: SelectionTuple,
    pub pre_a: RatingState,
    pub pre_b: RatingState,
    pub post_a: RatingState,
    pub post_b: RatingState,
    #[serde(default)]
    pub newly_converged: Vec<ModelId>,
    pub prompt_ids: Vec<String>,
    pub timestamp: u64,
    pub seed_fingerprint: String,
}

impl MatchRecord {
    pub fn from_round(round: &RoundRecord, dimension: Dimension, fingerprint: &str) -> Self {
        Self {
            round_index: round.round,
            dimension,
            model_a: round.decision.pivot.clone(),
            model_b: round.decision.opponent.clone(),
            mode: round.decision.mode,
            wins_a: round.batch.wins_a,
            wins_b: round.batch.wins_b,
            ties: round.batch.ties,
            p_a: round.outcome.p_a,
            verdict: round.outcome.verdict,
            weight: round.outcome.weight,
            selection_tuple: round.decision.selection_tuple,
            pre_a: round.pre.0.clone(),
            pre_b: round.pre.1.clone(),
            post_a: round.post.0.clone(),
            post_b: round.post.1.clone(),
            newly_converged: round.newly_converged.clone(),
            prompt_ids: round.prompt_ids.clone(),
            timestamp: now_millis(),
            seed_fingerprint: fingerprint.to_string(),
        }
    }

    pub fn decision(&self) -> ScheduleDecision {
        ScheduleDecision {
            pivot: self.model_a.clone(),
            opponent: self.model_b.clone(),
            mode: self.mode,
            selection_tuple: self.selection_tuple,
        }
    }

    pub fn batch(&self) -> MicroBatchResult {
        MicroBatchResult::new(self.wins_a, self.wins_b, self.ties)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Header(LogHeader),
    Register {
        model: ModelId,
        state: RatingState,
        timestamp: u64,
    },
    Match(MatchRecord),
    Snapshot {
        round: u64,
        leaderboard: Vec<LeaderboardEntry>,
        timestamp: u64,
    },
}

/// Parsed log. `dropped_tail` is set when a partial last line was ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LogContents {
    pub header: LogHeader,
    pub events: Vec<LogEvent>,
    pub dropped_tail: bool,
}

pub fn read_log(path: &Path) -> Result<LogContents, LogError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut dropped_tail = false;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| io_err(path, e))? == 0 {
            break;
        }
        lineno += 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogEvent>(line.trim_end()) {
            Ok(ev) => events.push(ev),
            Err(_) if !line.ends_with('\n') => {
                log::warn!("{}: ignoring truncated trailing line {lineno}", path.display());
                dropped_tail = true;
            }
            Err(e) => {
                return Err(LogError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })
            }
        }
    }
    let header = match events.first() {
        Some(LogEvent::Header(h)) => h.clone(),
        _ => return Err(LogError::MissingHeader),
    };
    if header.version != LOG_VERSION {
        return Err(LogError::Version(header.version));
    }
    Ok(LogContents {
        header,
        events: events.split_off(1),
        dropped_tail,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub state: ArenaState,
    pub rounds: u64,
    /// Rounds at which a stored leaderboard snapshot was checked.
    pub snapshots_checked: Vec<u64>,
}

fn bits(s: &RatingState) -> (u64, u64, u64, u64) {
    (s.mu.to_bits(), s.sigma.to_bits(), s.batches_evaluated, s.batches_attempted)
}

fn same_state(a: &RatingState, b: &RatingState) -> bool {
    bits(a) == bits(b) && a == b
}

/// Rebuilds the arena from its log, re-deriving every decision and posterior
/// and checking each against what was recorded, to the last bit.
pub fn replay(contents: &LogContents) -> Result<ReplayOutcome, LogError> {
    let h = &contents.header;
    let hp = &h.hyper_params;
    let mut state = ArenaState::with_convergence(h.seed, h.convergence);
    let mut snapshots_checked = Vec::new();
    for ev in &contents.events {
        match ev {
            LogEvent::Header(_) => {
                return Err(LogError::Malformed {
                    line: 0,
                    message: "second header".into(),
                })
            }
            LogEvent::Register { model, state: s, .. } => state.register_with(model, s.clone())?,
            LogEvent::Match(rec) => {
                let round = rec.round_index;
                let mismatch = |message: String| LogError::Mismatch { round, message };
                if round != state.round_index + 1 {
                    return Err(mismatch(format!("expected round {}", state.round_index + 1)));
                }
                let decided = state.decide(hp)?;
                let recorded = rec.decision();
                if decided.pivot != recorded.pivot
                    || decided.opponent != recorded.opponent
                    || decided.mode != recorded.mode
                    || decided.selection_tuple.ucb_score.to_bits() != recorded.selection_tuple.ucb_score.to_bits()
                    || decided.selection_tuple.jitter.to_bits() != recorded.selection_tuple.jitter.to_bits()
                {
                    return Err(mismatch(format!(
                        "scheduler picks {} vs {}, log has {} vs {}",
                        decided.pivot, decided.opponent, recorded.pivot, recorded.opponent
                    )));
                }
                let out = state.commit(recorded, rec.prompt_ids.clone(), rec.batch(), hp)?;
                if !same_state(&out.pre.0, &rec.pre_a) || !same_state(&out.pre.1, &rec.pre_b) {
                    return Err(mismatch("pre-round ratings differ".into()));
                }
                if !same_state(&out.post.0, &rec.post_a) || !same_state(&out.post.1, &rec.post_b) {
                    return Err(mismatch(format!(
                        "posterior differs: ({}, {}) vs logged ({}, {})",
                        out.post.0.mu, out.post.0.sigma, rec.post_a.mu, rec.post_a.sigma
                    )));
                }
                if out.outcome.verdict != rec.verdict
                    || out.outcome.weight.to_bits() != rec.weight.to_bits()
                    || out.outcome.p_a.to_bits() != rec.p_a.to_bits()
                {
                    return Err(mismatch("macro outcome differs".into()));
                }
            }
            LogEvent::Snapshot { round, leaderboard, .. } => {
                if *round != state.round_index {
                    return Err(LogError::Mismatch {
                        round: *round,
                        message: format!("snapshot taken at round {} of replay", state.round_index),
                    });
                }
                if &state.leaderboard(hp) != leaderboard {
                    return Err(LogError::Mismatch {
                        round: *round,
                        message: "leaderboard snapshot differs".into(),
                    });
                }
                snapshots_checked.push(*round);
            }
        }
    }
    Ok(ReplayOutcome {
        rounds: state.round_index,
        state,
        snapshots_checked,
    })
}

/// Exclusive appender for one arena's log.
#[derive(Debug)]
pub struct MatchLogWriter {
    file: File,
    path: PathBuf,
    header: LogHeader,
}

impl MatchLogWriter {
    fn open_locked(path: &Path, truncate: bool) -> Result<File, LogError> {
        let mut opts = OpenOptions::new();
        opts.read(true).create(true);
        if truncate {
            opts.write(true);
        } else {
            opts.append(true);
        }
        let file = opts.open(path).map_err(|e| io_err(path, e))?;
        if !jsonl::try_lock(&file).map_err(|e| io_err(path, e))? {
            return Err(LogError::Locked(path.display().to_string()));
        }
        Ok(file)
    }

    /// Starts a new log, replacing any existing file.
    pub fn create(path: &Path, header: LogHeader) -> Result<Self, LogError> {
        let file = Self::open_locked(path, true)?;
        file.set_len(0).map_err(|e| io_err(path, e))?;
        let mut w = Self {
            file,
            path: path.to_path_buf(),
            header: header.clone(),
        };
        w.append(&LogEvent::Header(header))?;
        Ok(w)
    }

    /// Reopens an existing log for appending after dropping any partial
    /// trailing line. Returns the writer and the parsed contents.
    pub fn resume(path: &Path) -> Result<(Self, LogContents), LogError> {
        let mut file = Self::open_locked(path, false)?;
        jsonl::truncate_partial_tail(&mut file, path).map_err(|e| io_err(path, e))?;
        let contents = read_log(path)?;
        Ok((
            Self {
                file,
                path: path.to_path_buf(),
                header: contents.header.clone(),
            },
            contents,
        ))
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn append(&mut self, event: &LogEvent) -> Result<(), LogError> {
        let mut line = serde_json::to_vec(event).map_err(|e| io_err(&self.path, std::io::Error::other(e)))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))
    }

    pub fn register(&mut self, model: &str, state: &RatingState) -> Result<(), LogError> {
        self.append(&LogEvent::Register {
            model: model.to_string(),
            state: state.clone(),
            timestamp: now_millis(),
        })
    }

    pub fn record_round(&mut self, round: &RoundRecord) -> Result<(), LogError> {
        let rec = MatchRecord::from_round(round, self.header.dimension, &self.header.seed_fingerprint);
        self.append(&LogEvent::Match(rec))
    }

    pub fn snapshot(&mut self, round: u64, leaderboard: Vec<LeaderboardEntry>) -> Result<(), LogError> {
        self.append(&LogEvent::Snapshot {
            round,
            leaderboard,
            timestamp: now_millis(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::{PairwiseOutcome, Verdict};
    use crate::scheduler::{BatchRequest, OutcomeSource, SourceError};

    // Higher model index wins most prompts.
    struct ByName;

    impl OutcomeSource for ByName {
        fn evaluate(&mut self, req: &BatchRequest) -> Result<Vec<PairwiseOutcome>, SourceError> {
            let stronger_a = req.model_a > req.model_b;
            Ok((0..req.batch_size)
                .map(|i| {
                    let v = match (i % 5, stronger_a) {
                        (0, _) => Verdict::Tie,
                        (1, true) => Verdict::B,
                        (1, false) => Verdict::A,
                        (_, true) => Verdict::A,
                        (_, false) => Verdict::B,
                    };
                    PairwiseOutcome::new(v, Dimension::Alignment, format!("p{}-{i}", req.round))
                })
                .collect())
        }
    }

    fn run(path: &Path, rounds: u64) -> ArenaState {
        let hp = RatingHyperParams::default();
        let header = LogHeader::new(Dimension::Alignment, 11, ConvergenceRule::SigmaFloor, &hp);
        let mut w = MatchLogWriter::create(path, header).unwrap();
        let mut state = ArenaState::with_convergence(11, ConvergenceRule::SigmaFloor);
        for m in ["m0", "m1", "m2", "m3"] {
            state.register(m, &hp).unwrap();
            w.register(m, state.rating(m).unwrap()).unwrap();
        }
        for _ in 0..rounds {
            let r = state.run_round(&mut ByName, &hp).unwrap();
            w.record_round(&r).unwrap();
        }
        w.snapshot(state.round_index, state.leaderboard(&hp)).unwrap();
        state
    }

    #[test]
    fn replay_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let live = run(&path, 60);
        let out = replay(&read_log(&path).unwrap()).unwrap();
        assert_eq!(out.state, live);
        assert_eq!(out.snapshots_checked, [60]);
        for (id, s) in &live.ratings {
            assert_eq!(out.state.ratings[id].mu.to_bits(), s.mu.to_bits());
        }
    }

    #[test]
    fn tampered_log_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        run(&path, 10);
        let mut contents = read_log(&path).unwrap();
        for ev in contents.events.iter_mut() {
            if let LogEvent::Match(r) = ev {
                if r.round_index == 5 {
                    r.post_a.mu = f64::from_bits(r.post_a.mu.to_bits() + 1);
                }
            }
        }
        assert!(matches!(replay(&contents), Err(LogError::Mismatch { round: 5, .. })));
    }

    #[test]
    fn truncated_tail_is_dropped_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        run(&path, 8);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 30]).unwrap();
        let c = read_log(&path).unwrap();
        assert!(c.dropped_tail);
        let (_w, c) = MatchLogWriter::resume(&path).unwrap();
        assert!(!c.dropped_tail);
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));
        assert_eq!(replay(&c).unwrap().rounds, 8);
    }

    #[test]
    fn missing_header_and_lock() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_log(&path), Err(LogError::MissingHeader)));
        let hp = RatingHyperParams::default();
        let _w = MatchLogWriter::create(&path, LogHeader::new(Dimension::Aesthetic, 1, ConvergenceRule::Never, &hp)).unwrap();
        assert!(matches!(MatchLogWriter::resume(&path), Err(LogError::Locked(_))));
    }
}
