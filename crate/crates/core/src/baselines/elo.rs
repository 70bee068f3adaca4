use super::{order_by_key, ModelIdx, Outcome, Rater, RaterError, Roster};
use crate::rating::MicroBatchResult;

#[derive(Debug, Clone)]
pub struct Elo {
    pub k: f64,
    pub initial: f64,
    roster: Roster,
    ratings: Vec<f64>,
}

impl Default for Elo {
    fn default() -> Self {
        Self::new(32.0, 1500.0)
    }
}

impl Elo {
    pub fn new(k: f64, initial: f64) -> Self {
        Self {
            k,
            initial,
            roster: Roster::default(),
            ratings: Vec::new(),
        }
    }

    pub fn rating(&self, model: ModelIdx) -> Result<f64, RaterError> {
        Ok(self.ratings[self.roster.slot(model)?])
    }

    pub fn expected(ra: f64, rb: f64) -> f64 {
        1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0))
    }

    pub fn update(&mut self, a: ModelIdx, b: ModelIdx, outcome: Outcome) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        let delta = self.k * (outcome.score_a() - Self::expected(self.ratings[i], self.ratings[j]));
        self.ratings[i] += delta;
        self.ratings[j] -= delta;
        Ok(())
    }
}

impl Rater for Elo {
    fn name(&self) -> &'static str {
        "Elo"
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.ratings.push(self.initial);
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.roster.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        self.roster.pair(a, b)?;
        match Outcome::from_batch(batch) {
            Some(o) => self.update(a, b, o),
            None => Ok(()),
        }
    }

    fn rank(&self) -> Vec<ModelIdx> {
        order_by_key(&self.roster.models, |m| self.ratings[self.roster.slot(m).unwrap()])
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.ratings.clear();
    }
}
