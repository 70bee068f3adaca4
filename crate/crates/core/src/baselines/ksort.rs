//! K-wise arena: models are compared in small groups, every pair within the
//! group plays once, and the group's results feed one Bradley-Terry
//! full-pair update (Weng-Lin).

use std::collections::VecDeque;

use rand::RngCore;

use super::{order_by_key, ModelIdx, Outcome, Rater, RaterError, Roster};
use crate::rating::MicroBatchResult;

#[derive(Debug, Clone)]
pub struct KSort {
    pub group_size: usize,
    pub mu0: f64,
    pub sigma0: f64,
    pub beta: f64,
    pub tau: f64,
    /// Weight of the uncertainty term when filling a group around its anchor.
    pub explore: f64,
    roster: Roster,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    games: Vec<u64>,
    queue: VecDeque<(ModelIdx, ModelIdx)>,
    pending: Vec<(usize, usize, Outcome)>,
}

const KAPPA: f64 = 1e-4;

impl Default for KSort {
    fn default() -> Self {
        Self {
            group_size: 4,
            mu0: 25.0,
            sigma0: 25.0 / 3.0,
            beta: 25.0 / 6.0,
            tau: 25.0 / 300.0,
            explore: 1.0,
            roster: Roster::default(),
            mu: Vec::new(),
            sigma: Vec::new(),
            games: Vec::new(),
            queue: VecDeque::new(),
            pending: Vec::new(),
        }
    }
}

impl KSort {
    pub fn score(&self, slot: usize) -> f64 {
        self.mu[slot] - 3.0 * self.sigma[slot]
    }

    /// Anchor with the widest posterior, then its nearest plausible rivals.
    fn next_group(&self) -> Vec<usize> {
        let n = self.roster.len();
        let anchor = (0..n)
            .min_by(|&x, &y| {
                self.sigma[y]
                    .total_cmp(&self.sigma[x])
                    .then(self.games[x].cmp(&self.games[y]))
                    .then(x.cmp(&y))
            })
            .expect("at least two models");
        let mut rest: Vec<usize> = (0..n).filter(|&j| j != anchor).collect();
        let appeal = |j: usize| -(self.mu[j] - self.mu[anchor]).abs() + self.explore * self.sigma[j];
        rest.sort_by(|&x, &y| appeal(y).total_cmp(&appeal(x)).then(x.cmp(&y)));
        let mut group = vec![anchor];
        group.extend(rest.into_iter().take(self.group_size.saturating_sub(1)));
        group
    }

    fn flush(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let mut touched = vec![false; self.roster.len()];
        for &(i, j, _) in &self.pending {
            touched[i] = true;
            touched[j] = true;
        }
        let var: Vec<f64> = (0..self.roster.len())
            .map(|i| {
                let s2 = self.sigma[i].powi(2);
                if touched[i] {
                    s2 + self.tau * self.tau
                } else {
                    s2
                }
            })
            .collect();
        let mut omega = vec![0.0; var.len()];
        let mut delta = vec![0.0; var.len()];
        for &(i, j, outcome) in &self.pending {
            let s = outcome.score_a();
            for (me, other, score) in [(i, j, s), (j, i, 1.0 - s)] {
                let c = (var[me] + var[other] + 2.0 * self.beta * self.beta).sqrt();
                let p = 1.0 / (1.0 + ((self.mu[other] - self.mu[me]) / c).exp());
                omega[me] += var[me] / c * (score - p);
                let gamma = var[me].sqrt() / c;
                delta[me] += gamma * var[me] / (c * c) * p * (1.0 - p);
            }
        }
        for i in 0..var.len() {
            if touched[i] {
                self.mu[i] += omega[i];
                self.sigma[i] = (var[i] * (1.0 - delta[i]).max(KAPPA)).sqrt();
            }
        }
        for &(i, j, _) in &self.pending {
            self.games[i] += 1;
            self.games[j] += 1;
        }
        self.pending.clear();
    }
}

impl Rater for KSort {
    fn name(&self) -> &'static str {
        "K-Sort Arena"
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.mu.push(self.mu0);
        self.sigma.push(self.sigma0);
        self.games.push(0);
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.roster.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        if let Some(pos) = self.queue.iter().position(|&p| p == (a, b) || p == (b, a)) {
            self.queue.remove(pos);
        }
        if let Some(o) = Outcome::from_batch(batch) {
            self.pending.push((i, j, o));
        }
        if self.queue.is_empty() {
            self.flush();
        }
        Ok(())
    }

    fn rank(&self) -> Vec<ModelIdx> {
        order_by_key(&self.roster.models, |m| self.score(self.roster.slot(m).unwrap()))
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.mu.clear();
        self.sigma.clear();
        self.games.clear();
        self.queue.clear();
        self.pending.clear();
    }

    fn propose(&mut self, _rng: &mut dyn RngCore) -> Option<(ModelIdx, ModelIdx)> {
        if self.roster.len() < 2 {
            return None;
        }
        if self.queue.is_empty() {
            let group = self.next_group();
            for (x, &i) in group.iter().enumerate() {
                for &j in &group[x + 1..] {
                    self.queue.push_back((self.roster.models[i], self.roster.models[j]));
                }
            }
        }
        self.queue.front().copied()
    }
}
