//! Relative upper confidence bound dueling bandit, ranked by Copeland score.

use rand::{Rng, RngCore};

use super::{ModelIdx, Outcome, Rater, RaterError, Roster, WinMatrix};
use crate::rating::MicroBatchResult;

#[derive(Debug, Clone)]
pub struct Rucb {
    pub alpha: f64,
    roster: Roster,
    wins: WinMatrix,
    t: u64,
}

impl Default for Rucb {
    fn default() -> Self {
        Self {
            alpha: 0.51,
            roster: Roster::default(),
            wins: WinMatrix::default(),
            t: 0,
        }
    }
}

impl Rucb {
    /// Optimistic estimate that slot `i` beats slot `j`.
    pub fn upper(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.5;
        }
        let n = self.wins.games(i, j);
        if n == 0.0 {
            return 1.0;
        }
        let t = (self.t.max(1)) as f64;
        self.wins.wins(i, j) / n + (self.alpha * t.ln() / n).sqrt()
    }

    /// Number of opponents beaten on the empirical preference matrix.
    pub fn copeland(&self, i: usize) -> usize {
        (0..self.roster.len())
            .filter(|&j| j != i && self.wins.wins(i, j) > self.wins.wins(j, i))
            .count()
    }

    fn win_rate(&self, i: usize) -> f64 {
        let (mut w, mut n) = (0.0, 0.0);
        for j in 0..self.roster.len() {
            if j != i {
                w += self.wins.wins(i, j);
                n += self.wins.games(i, j);
            }
        }
        if n == 0.0 {
            0.5
        } else {
            w / n
        }
    }
}

impl Rater for Rucb {
    fn name(&self) -> &'static str {
        "RUCB"
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.wins.grow();
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.roster.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        if let Some(o) = Outcome::from_batch(batch) {
            self.wins.record(i, j, o);
        }
        self.t += 1;
        Ok(())
    }

    fn rank(&self) -> Vec<ModelIdx> {
        let n = self.roster.len();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.sort_by(|&x, &y| {
            self.copeland(y)
                .cmp(&self.copeland(x))
                .then(self.win_rate(y).total_cmp(&self.win_rate(x)))
                .then(self.roster.models[x].cmp(&self.roster.models[y]))
        });
        slots.into_iter().map(|s| self.roster.models[s]).collect()
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.wins.clear();
        self.t = 0;
    }

    fn propose(&mut self, rng: &mut dyn RngCore) -> Option<(ModelIdx, ModelIdx)> {
        let n = self.roster.len();
        if n < 2 {
            return None;
        }
        let candidates: Vec<usize> = (0..n)
            .filter(|&c| (0..n).all(|j| self.upper(c, j) >= 0.5))
            .collect();
        let c = if candidates.is_empty() {
            rng.gen_range(0..n)
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        let d = (0..n)
            .filter(|&j| j != c)
            .max_by(|&x, &y| self.upper(x, c).total_cmp(&self.upper(y, c)).then(y.cmp(&x)))
            .unwrap();
        Some((self.roster.models[c], self.roster.models[d]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominant_arm_found() {
        let strength = [0.0f64, 0.2, 1.5, 0.1, -0.3];
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = Rucb::default();
            for m in 0..strength.len() {
                r.inject(m).unwrap();
            }
            for _ in 0..500 {
                let (a, b) = r.propose(&mut rng).unwrap();
                let p = 1.0 / (1.0 + (strength[b] - strength[a]).exp());
                let batch = if rng.gen::<f64>() < p {
                    MicroBatchResult::new(15, 0, 0)
                } else {
                    MicroBatchResult::new(0, 15, 0)
                };
                r.observe(a, b, &batch).unwrap();
            }
            if r.rank()[0] == 2 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}");
    }

    #[test]
    fn unplayed_pairs_are_optimistic() {
        let mut r = Rucb::default();
        r.inject(0).unwrap();
        r.inject(1).unwrap();
        assert_eq!(r.upper(0, 1), 1.0);
        assert_eq!(r.upper(1, 1), 0.5);
    }
}
