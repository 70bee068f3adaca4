//! Online match scheduling over one evaluation dimension.
//!
//! Every round picks a pivot (the active model with the fewest evaluated
//! micro-batches), pairs it with an opponent chosen by a UCB-style
//! lexicographic rule, evaluates one micro-batch and applies exactly one
//! posterior update.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluators::{tally, PairwiseOutcome};
use crate::rating::{
    apply_batch, conservative_score, MacroOutcome, MicroBatchResult, RatingError,
    RatingHyperParams, RatingState,
};

pub type ModelId = String;

pub type SourceError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no active models")]
    NoActiveModels,
    #[error("no eligible opponent for {0}")]
    NoEligibleOpponent(ModelId),
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
    #[error("model {0} is already registered")]
    DuplicateModel(ModelId),
    #[error("outcome source failed: {0}")]
    Source(#[source] SourceError),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

/// When a model leaves the active set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ConvergenceRule {
    /// Converged once sigma reaches the uncertainty floor.
    #[default]
    SigmaFloor,
    /// Converged once sigma drops to or below the given value.
    Threshold(f64),
    /// Models stay active forever.
    Never,
}

impl ConvergenceRule {
    fn is_converged(&self, state: &RatingState, hp: &RatingHyperParams) -> bool {
        match *self {
            ConvergenceRule::SigmaFloor => state.sigma <= hp.sigma_conv,
            ConvergenceRule::Threshold(limit) => state.sigma <= limit,
            ConvergenceRule::Never => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleMode {
    ActivePair,
    Sparring,
}

/// Lexicographic selection key `(ucb, sigma_bias, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionTuple {
    pub ucb_score: f64,
    pub sigma_bias: f64,
    pub jitter: f64,
}

impl SelectionTuple {
    fn cmp_lex(&self, other: &Self) -> Ordering {
        self.ucb_score
            .total_cmp(&other.ucb_score)
            .then(self.sigma_bias.total_cmp(&other.sigma_bias))
            .then(self.jitter.total_cmp(&other.jitter))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub pivot: ModelId,
    pub opponent: ModelId,
    pub mode: ScheduleMode,
    pub selection_tuple: SelectionTuple,
}

/// Scheduler state of one arena (one evaluation dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaState {
    pub active: BTreeSet<ModelId>,
    pub converged: BTreeSet<ModelId>,
    pub ratings: BTreeMap<ModelId, RatingState>,
    #[serde(with = "pair_table")]
    pair_counts: BTreeMap<(ModelId, ModelId), u64>,
    /// Completed rounds.
    pub round_index: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub convergence: ConvergenceRule,
}

/// Everything observable about one completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based index of this round.
    pub round: u64,
    pub decision: ScheduleDecision,
    pub prompt_ids: Vec<String>,
    pub batch: MicroBatchResult,
    pub outcome: MacroOutcome,
    pub pre: (RatingState, RatingState),
    pub post: (RatingState, RatingState),
    /// Models that left the active set at the end of this round.
    #[serde(default)]
    pub newly_converged: Vec<ModelId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchRequest<'a> {
    pub round: u64,
    pub model_a: &'a str,
    pub model_b: &'a str,
    pub batch_size: u32,
}

/// Supplies prompt-level outcomes for one micro-batch. Outcomes are in
/// canonical order: `A` is `model_a`. Fewer than `batch_size` outcomes are
/// allowed (failed prompts are dropped); none at all makes the batch invalid.
pub trait OutcomeSource {
    fn evaluate(&mut self, request: &BatchRequest<'_>) -> Result<Vec<PairwiseOutcome>, SourceError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub model: ModelId,
    pub score: f64,
    pub mu: f64,
    pub sigma: f64,
    pub batches: u64,
}

impl ArenaState {
    pub fn new(rng_seed: u64) -> Self {
        Self::with_convergence(rng_seed, ConvergenceRule::default())
    }

    pub fn with_convergence(rng_seed: u64, convergence: ConvergenceRule) -> Self {
        Self {
            active: BTreeSet::new(),
            converged: BTreeSet::new(),
            ratings: BTreeMap::new(),
            pair_counts: BTreeMap::new(),
            round_index: 0,
            rng_seed,
            convergence,
        }
    }

    /// Adds a model with the prior rating. New models start active with zero
    /// batches, so they become the pivot on the next round.
    pub fn register(&mut self, id: &str, hp: &RatingHyperParams) -> Result<(), ScheduleError> {
        self.register_with(id, RatingState::prior(hp))
    }

    pub fn register_with(&mut self, id: &str, state: RatingState) -> Result<(), ScheduleError> {
        if self.ratings.contains_key(id) {
            return Err(ScheduleError::DuplicateModel(id.to_string()));
        }
        self.ratings.insert(id.to_string(), state);
        self.active.insert(id.to_string());
        Ok(())
    }

    pub fn rating(&self, id: &str) -> Result<&RatingState, ScheduleError> {
        self.ratings
            .get(id)
            .ok_or_else(|| ScheduleError::UnknownModel(id.to_string()))
    }

    pub fn pair_count(&self, a: &str, b: &str) -> u64 {
        self.pair_counts
            .get(&pair_key(a, b))
            .copied()
            .unwrap_or(0)
    }

    pub fn pair_counts(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.pair_counts
            .iter()
            .map(|((a, b), n)| (a.as_str(), b.as_str(), *n))
    }

    /// Models eligible to be pivot. When every model has converged the whole
    /// roster is reopened so the arena keeps refining.
    fn pivot_pool(&self) -> &BTreeSet<ModelId> {
        if self.active.is_empty() {
            &self.converged
        } else {
            &self.active
        }
    }

    /// The pool member with the fewest evaluated batches, lowest id on ties.
    pub fn select_pivot(&self) -> Result<ModelId, ScheduleError> {
        let mut best: Option<(&ModelId, u64)> = None;
        for id in self.pivot_pool() {
            let n = self.ratings[id].batches_evaluated;
            if best.is_none_or(|(_, m)| n < m) {
                best = Some((id, n));
            }
        }
        best.map(|(id, _)| id.clone())
            .ok_or(ScheduleError::NoActiveModels)
    }

    /// Picks the pivot's opponent for the upcoming round.
    pub fn select_opponent(
        &self,
        pivot: &str,
        hp: &RatingHyperParams,
    ) -> Result<ScheduleDecision, ScheduleError> {
        let pivot_state = self.rating(pivot)?;
        let pool = self.pivot_pool();
        let candidates: Vec<&ModelId> = pool.iter().filter(|id| id.as_str() != pivot).collect();

        if candidates.is_empty() {
            return self.select_sparring(pivot, pivot_state);
        }

        let round = (self.round_index + 1) as f64;
        let log_round = round.max(1.0).ln();
        let mut rng = self.jitter_stream();
        let mut best: Option<(&ModelId, SelectionTuple)> = None;
        for id in candidates {
            let other = &self.ratings[id];
            let n = self.pair_count(pivot, id).max(1) as f64;
            let tuple = SelectionTuple {
                ucb_score: -(pivot_state.mu - other.mu).abs() + hp.alpha * (log_round / n).sqrt(),
                sigma_bias: other.sigma.powf(hp.gamma_sigma),
                jitter: rng.gen::<f64>(),
            };
            if best
                .as_ref()
                .is_none_or(|(_, b)| tuple.cmp_lex(b) == Ordering::Greater)
            {
                best = Some((id, tuple));
            }
        }
        let (opponent, selection_tuple) = best.expect("non-empty candidates");
        Ok(ScheduleDecision {
            pivot: pivot.to_string(),
            opponent: opponent.clone(),
            mode: ScheduleMode::ActivePair,
            selection_tuple,
        })
    }

    fn select_sparring(
        &self,
        pivot: &str,
        pivot_state: &RatingState,
    ) -> Result<ScheduleDecision, ScheduleError> {
        let mut best: Option<(&ModelId, f64)> = None;
        for id in self.converged.iter().filter(|id| id.as_str() != pivot) {
            let gap = (self.ratings[id].mu - pivot_state.mu).abs();
            if best.is_none_or(|(_, g)| gap < g) {
                best = Some((id, gap));
            }
        }
        let (opponent, gap) = best.ok_or_else(|| ScheduleError::NoEligibleOpponent(pivot.to_string()))?;
        Ok(ScheduleDecision {
            pivot: pivot.to_string(),
            opponent: opponent.clone(),
            mode: ScheduleMode::Sparring,
            selection_tuple: SelectionTuple {
                ucb_score: -gap,
                sigma_bias: self.ratings[opponent].sigma,
                jitter: 0.0,
            },
        })
    }

    /// Pivot and opponent for the upcoming round.
    pub fn decide(&self, hp: &RatingHyperParams) -> Result<ScheduleDecision, ScheduleError> {
        let pivot = self.select_pivot()?;
        self.select_opponent(&pivot, hp)
    }

    // Counter-based stream: the jitter of round r depends only on (seed, r),
    // so replays and resumed runs draw identical values.
    fn jitter_stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(self.round_index + 1);
        rng
    }

    /// Applies the result of one micro-batch for a decision made on the
    /// current state. Used by live rounds and by log replay alike.
    pub fn commit(
        &mut self,
        decision: ScheduleDecision,
        prompt_ids: Vec<String>,
        batch: MicroBatchResult,
        hp: &RatingHyperParams,
    ) -> Result<RoundRecord, ScheduleError> {
        let pre_a = self.rating(&decision.pivot)?.clone();
        let pre_b = self.rating(&decision.opponent)?.clone();
        let (post_a, post_b, outcome) = apply_batch(&pre_a, &pre_b, &batch, hp)?;

        self.ratings.insert(decision.pivot.clone(), post_a.clone());
        self.ratings.insert(decision.opponent.clone(), post_b.clone());
        if outcome.verdict != crate::rating::MacroVerdict::Invalid {
            *self
                .pair_counts
                .entry(pair_key(&decision.pivot, &decision.opponent))
                .or_insert(0) += 1;
        }
        self.round_index += 1;

        let mut newly_converged = Vec::new();
        for id in [&decision.pivot, &decision.opponent] {
            if self.active.contains(id) && self.convergence.is_converged(&self.ratings[id], hp) {
                self.active.remove(id);
                self.converged.insert(id.clone());
                newly_converged.push(id.clone());
            }
        }

        Ok(RoundRecord {
            round: self.round_index,
            decision,
            prompt_ids,
            batch,
            outcome,
            pre: (pre_a, pre_b),
            post: (post_a, post_b),
            newly_converged,
        })
    }

    /// One full scheduling round. A failing source leaves the state untouched.
    pub fn run_round(
        &mut self,
        source: &mut dyn OutcomeSource,
        hp: &RatingHyperParams,
    ) -> Result<RoundRecord, ScheduleError> {
        let decision = self.decide(hp)?;
        let request = BatchRequest {
            round: self.round_index + 1,
            model_a: &decision.pivot,
            model_b: &decision.opponent,
            batch_size: hp.batch_size,
        };
        let outcomes = source.evaluate(&request).map_err(ScheduleError::Source)?;
        let batch = tally(outcomes.iter().map(|o| &o.verdict));
        let prompt_ids = outcomes.into_iter().map(|o| o.prompt_id).collect();
        self.commit(decision, prompt_ids, batch, hp)
    }

    /// Models sorted by conservative score, then mean, then id.
    pub fn leaderboard(&self, hp: &RatingHyperParams) -> Vec<LeaderboardEntry> {
        leaderboard(self.ratings.iter().map(|(id, s)| (id.as_str(), s)), hp)
    }
}

/// Ranks arbitrary `(id, state)` pairs the way the arena leaderboard does.
pub fn leaderboard<'a>(
    states: impl IntoIterator<Item = (&'a str, &'a RatingState)>,
    hp: &RatingHyperParams,
) -> Vec<LeaderboardEntry> {
    let mut rows: Vec<LeaderboardEntry> = states
        .into_iter()
        .map(|(id, s)| LeaderboardEntry {
            rank: 0,
            model: id.to_string(),
            score: conservative_score(s, hp),
            mu: s.mu,
            sigma: s.sigma,
            batches: s.batches_evaluated,
        })
        .collect();
    rows.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(y.mu.total_cmp(&x.mu))
            .then_with(|| x.model.cmp(&y.model))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    rows
}

fn pair_key(a: &str, b: &str) -> (ModelId, ModelId) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

mod pair_table {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::ModelId;

    #[derive(Serialize, Deserialize)]
    struct Row {
        a: ModelId,
        b: ModelId,
        n: u64,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(ModelId, ModelId), u64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = map
            .iter()
            .map(|((a, b), n)| Row {
                a: a.clone(),
                b: b.clone(),
                n: *n,
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(ModelId, ModelId), u64>, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| (super::pair_key(&r.a, &r.b), r.n))
            .collect())
    }
}
