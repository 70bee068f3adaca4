//! Active ranking from pairwise comparisons (Borda-score elimination).
//!
//! Each model's Borda score is the probability it beats a uniformly random
//! other model. Models whose confidence interval still overlaps another's
//! stay active; each round the active model with the fewest samples is
//! compared against a random opponent.

use rand::{Rng, RngCore};

use super::{order_by_key, ModelIdx, Outcome, Rater, RaterError, Roster};
use crate::rating::MicroBatchResult;

#[derive(Debug, Clone)]
pub struct ActiveRanking {
    pub delta: f64,
    roster: Roster,
    samples: Vec<u64>,
    score_sum: Vec<f64>,
}

impl Default for ActiveRanking {
    fn default() -> Self {
        Self {
            delta: 0.05,
            roster: Roster::default(),
            samples: Vec::new(),
            score_sum: Vec::new(),
        }
    }
}

impl ActiveRanking {
    pub fn borda(&self, slot: usize) -> f64 {
        if self.samples[slot] == 0 {
            0.5
        } else {
            self.score_sum[slot] / self.samples[slot] as f64
        }
    }

    /// Anytime confidence radius after `t` samples.
    pub fn radius(&self, t: u64) -> f64 {
        if t == 0 {
            return f64::INFINITY;
        }
        let n = self.roster.len().max(2) as f64;
        let t = t as f64;
        ((125.0 * n * (1.12 * t).ln().max(1.0) / self.delta).ln() / t).sqrt()
    }

    fn is_active(&self, slot: usize) -> bool {
        let lo = self.borda(slot) - self.radius(self.samples[slot]);
        let hi = self.borda(slot) + self.radius(self.samples[slot]);
        (0..self.roster.len()).any(|j| {
            if j == slot {
                return false;
            }
            let r = self.radius(self.samples[j]);
            let (l2, h2) = (self.borda(j) - r, self.borda(j) + r);
            lo < h2 && l2 < hi
        })
    }

    fn record(&mut self, slot: usize, score: f64) {
        self.samples[slot] += 1;
        self.score_sum[slot] += score;
    }
}

impl Rater for ActiveRanking {
    fn name(&self) -> &'static str {
        "Active Ranking"
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.samples.push(0);
        self.score_sum.push(0.0);
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.roster.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        if let Some(o) = Outcome::from_batch(batch) {
            // every comparison is a Borda sample for both sides
            self.record(i, o.score_a());
            self.record(j, 1.0 - o.score_a());
        }
        Ok(())
    }

    fn rank(&self) -> Vec<ModelIdx> {
        order_by_key(&self.roster.models, |m| self.borda(self.roster.slot(m).unwrap()))
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.samples.clear();
        self.score_sum.clear();
    }

    fn propose(&mut self, rng: &mut dyn RngCore) -> Option<(ModelIdx, ModelIdx)> {
        let n = self.roster.len();
        if n < 2 {
            return None;
        }
        let active: Vec<usize> = (0..n).filter(|&i| self.is_active(i)).collect();
        let pool = if active.is_empty() { (0..n).collect() } else { active };
        let i = *pool
            .iter()
            .min_by(|&&x, &&y| self.samples[x].cmp(&self.samples[y]).then(x.cmp(&y)))
            .unwrap();
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        Some((self.roster.models[i], self.roster.models[j]))
    }
}
