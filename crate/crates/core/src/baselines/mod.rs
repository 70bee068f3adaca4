//! Comparison systems for the simulation benchmark, all behind [`Rater`].
//!
//! Models are dense indices assigned by the caller. Passive raters only
//! observe; self-scheduling raters also propose the next pair.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::{aggregate_micro_batch, MacroVerdict, MicroBatchResult, RatingHyperParams};

mod active_ranking;
mod elo;
mod glicko2;
mod ksort;
mod rank_centrality;
mod rucb;
mod trueskill;

pub use active_ranking::ActiveRanking;
pub use elo::Elo;
pub use glicko2::Glicko2;
pub use ksort::KSort;
pub use rank_centrality::{rank_centrality, RankCentrality, RankCentralityResult};
pub use rucb::Rucb;
pub use trueskill::{Gaussian, TrueSkill, TrueSkillParams};

pub type ModelIdx = usize;

#[derive(Debug, Error, PartialEq)]
pub enum RaterError {
    #[error("unknown model {0}")]
    UnknownModel(ModelIdx),
    #[error("model {0} is already registered")]
    DuplicateModel(ModelIdx),
    #[error("a model cannot be compared with itself ({0})")]
    SelfPair(ModelIdx),
}

/// Macro result of one comparison as seen by a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    WinA,
    WinB,
    Tie,
}

impl Outcome {
    /// Score of side A: 1, 0 or 0.5.
    pub fn score_a(self) -> f64 {
        match self {
            Outcome::WinA => 1.0,
            Outcome::WinB => 0.0,
            Outcome::Tie => 0.5,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Outcome::WinA => Outcome::WinB,
            Outcome::WinB => Outcome::WinA,
            Outcome::Tie => Outcome::Tie,
        }
    }

    /// Resolves a micro-batch with the arena's thresholds. Empty batches
    /// carry no information and yield `None`.
    pub fn from_batch(batch: &MicroBatchResult) -> Option<Self> {
        match aggregate_micro_batch(batch, &RatingHyperParams::default()).verdict {
            MacroVerdict::WinA => Some(Outcome::WinA),
            MacroVerdict::WinB => Some(Outcome::WinB),
            MacroVerdict::Tie => Some(Outcome::Tie),
            MacroVerdict::Invalid => None,
        }
    }
}

pub trait Rater: Send {
    fn name(&self) -> &'static str;

    /// Adds a model with the system's prior.
    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError>;

    /// Registered models in registration order.
    fn models(&self) -> &[ModelIdx];

    /// Consumes one micro-batch between `a` and `b` (A is `a`).
    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError>;

    /// Best first; a total order over all registered models.
    fn rank(&self) -> Vec<ModelIdx>;

    /// Forgets every model and observation.
    fn reset(&mut self);

    /// Next pair for systems that schedule their own comparisons. Passive
    /// systems return `None` and are fed externally chosen pairs.
    fn propose(&mut self, _rng: &mut dyn RngCore) -> Option<(ModelIdx, ModelIdx)> {
        None
    }
}

/// Sorts models by descending key, lowest index first on equal keys.
pub(crate) fn order_by_key(models: &[ModelIdx], key: impl Fn(ModelIdx) -> f64) -> Vec<ModelIdx> {
    let mut order = models.to_vec();
    order.sort_by(|&x, &y| key(y).total_cmp(&key(x)).then(x.cmp(&y)));
    order
}

/// Dense registry mapping caller indices to internal slots.
#[derive(Debug, Clone, Default)]
pub(crate) struct Roster {
    pub models: Vec<ModelIdx>,
    slots: Vec<Option<usize>>,
}

impl Roster {
    pub fn add(&mut self, model: ModelIdx) -> Result<usize, RaterError> {
        if self.slot(model).is_ok() {
            return Err(RaterError::DuplicateModel(model));
        }
        if self.slots.len() <= model {
            self.slots.resize(model + 1, None);
        }
        let slot = self.models.len();
        self.slots[model] = Some(slot);
        self.models.push(model);
        Ok(slot)
    }

    pub fn slot(&self, model: ModelIdx) -> Result<usize, RaterError> {
        self.slots
            .get(model)
            .copied()
            .flatten()
            .ok_or(RaterError::UnknownModel(model))
    }

    pub fn pair(&self, a: ModelIdx, b: ModelIdx) -> Result<(usize, usize), RaterError> {
        if a == b {
            return Err(RaterError::SelfPair(a));
        }
        Ok((self.slot(a)?, self.slot(b)?))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn clear(&mut self) {
        self.models.clear();
        self.slots.clear();
    }
}

/// Win counts between every ordered pair, ties split in half.
#[derive(Debug, Clone, Default)]
pub(crate) struct WinMatrix {
    wins: Vec<Vec<f64>>,
}

impl WinMatrix {
    pub fn grow(&mut self) {
        for row in &mut self.wins {
            row.push(0.0);
        }
        self.wins.push(vec![0.0; self.wins.len() + 1]);
    }

    pub fn record(&mut self, a: usize, b: usize, outcome: Outcome) {
        let s = outcome.score_a();
        self.wins[a][b] += s;
        self.wins[b][a] += 1.0 - s;
    }

    pub fn wins(&self, i: usize, j: usize) -> f64 {
        self.wins[i][j]
    }

    pub fn games(&self, i: usize, j: usize) -> f64 {
        self.wins[i][j] + self.wins[j][i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.wins
    }

    pub fn clear(&mut self) {
        self.wins.clear();
    }
}

/// Every baseline, by name, with default parameters.
pub fn all_baselines() -> Vec<Box<dyn Rater>> {
    vec![
        Box::new(Elo::default()),
        Box::new(TrueSkill::trueskill()),
        Box::new(TrueSkill::trueskill2()),
        Box::new(Glicko2::default()),
        Box::new(RankCentrality::default()),
        Box::new(KSort::default()),
        Box::new(ActiveRanking::default()),
        Box::new(Rucb::default()),
    ]
}
