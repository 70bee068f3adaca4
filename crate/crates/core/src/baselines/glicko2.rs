//! Glicko-2 with a rating period of one game.

use std::f64::consts::PI;

use super::{order_by_key, ModelIdx, Outcome, Rater, RaterError, Roster};
use crate::rating::MicroBatchResult;

const SCALE: f64 = 173.7178;
const CONVERGENCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlickoRating {
    pub rating: f64,
    pub deviation: f64,
    pub volatility: f64,
}

#[derive(Debug, Clone)]
pub struct Glicko2 {
    pub initial: GlickoRating,
    /// System constant constraining volatility changes.
    pub tau: f64,
    roster: Roster,
    ratings: Vec<GlickoRating>,
}

impl Default for Glicko2 {
    fn default() -> Self {
        Self {
            initial: GlickoRating {
                rating: 1500.0,
                deviation: 350.0,
                volatility: 0.06,
            },
            tau: 0.5,
            roster: Roster::default(),
            ratings: Vec::new(),
        }
    }
}

fn g(phi: f64) -> f64 {
    1.0 / (1.0 + 3.0 * phi * phi / (PI * PI)).sqrt()
}

/// One rating-period update of `player` against the listed
/// `(opponent, score)` results.
pub fn glicko2_update(player: GlickoRating, results: &[(GlickoRating, f64)], tau: f64) -> GlickoRating {
    let mu = (player.rating - 1500.0) / SCALE;
    let phi = player.deviation / SCALE;
    let sigma = player.volatility;
    if results.is_empty() {
        let phi_star = (phi * phi + sigma * sigma).sqrt();
        return GlickoRating {
            deviation: phi_star * SCALE,
            ..player
        };
    }

    let mut v_inv = 0.0;
    let mut delta_sum = 0.0;
    for (opp, score) in results {
        let mu_j = (opp.rating - 1500.0) / SCALE;
        let phi_j = opp.deviation / SCALE;
        let g_j = g(phi_j);
        let e = 1.0 / (1.0 + (-g_j * (mu - mu_j)).exp());
        v_inv += g_j * g_j * e * (1.0 - e);
        delta_sum += g_j * (score - e);
    }
    let v = 1.0 / v_inv;
    let delta = v * delta_sum;

    // volatility via the Illinois variant of regula falsi
    let a = (sigma * sigma).ln();
    let f = |x: f64| {
        let ex = x.exp();
        let d = phi * phi + v + ex;
        ex * (delta * delta - phi * phi - v - ex) / (2.0 * d * d) - (x - a) / (tau * tau)
    };
    let mut lo = a;
    let mut hi = if delta * delta > phi * phi + v {
        (delta * delta - phi * phi - v).ln()
    } else {
        let mut k = 1.0;
        while f(a - k * tau) < 0.0 {
            k += 1.0;
        }
        a - k * tau
    };
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut iterations = 0;
    while (hi - lo).abs() > CONVERGENCE && iterations < 200 {
        let c = lo + (lo - hi) * f_lo / (f_hi - f_lo);
        let f_c = f(c);
        if f_c * f_hi <= 0.0 {
            lo = hi;
            f_lo = f_hi;
        } else {
            f_lo /= 2.0;
        }
        hi = c;
        f_hi = f_c;
        iterations += 1;
    }
    let sigma_new = (lo / 2.0).exp();

    let phi_star = (phi * phi + sigma_new * sigma_new).sqrt();
    let phi_new = 1.0 / (1.0 / (phi_star * phi_star) + 1.0 / v).sqrt();
    let mu_new = mu + phi_new * phi_new * delta_sum;
    GlickoRating {
        rating: mu_new * SCALE + 1500.0,
        deviation: phi_new * SCALE,
        volatility: sigma_new,
    }
}

impl Glicko2 {
    pub fn rating(&self, model: ModelIdx) -> Result<GlickoRating, RaterError> {
        Ok(self.ratings[self.roster.slot(model)?])
    }

    pub fn update(&mut self, a: ModelIdx, b: ModelIdx, outcome: Outcome) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        let (ra, rb) = (self.ratings[i], self.ratings[j]);
        let s = outcome.score_a();
        self.ratings[i] = glicko2_update(ra, &[(rb, s)], self.tau);
        self.ratings[j] = glicko2_update(rb, &[(ra, 1.0 - s)], self.tau);
        Ok(())
    }
}

impl Rater for Glicko2 {
    fn name(&self) -> &'static str {
        "Glicko-2"
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
        order_by_key(&self.roster.models, |m| self.ratings[self.roster.slot(m).unwrap()].rating)
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.ratings.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(rating: f64, deviation: f64) -> GlickoRating {
        GlickoRating {
            rating,
            deviation,
            volatility: 0.06,
        }
    }

    // Worked example from Glickman's description of the system.
    #[test]
    fn reference_example() {
        let out = glicko2_update(
            r(1500.0, 200.0),
            &[(r(1400.0, 30.0), 1.0), (r(1550.0, 100.0), 0.0), (r(1700.0, 300.0), 0.0)],
            0.5,
        );
        assert!((out.rating - 1464.06).abs() < 0.01, "{}", out.rating);
        assert!((out.deviation - 151.52).abs() < 0.01, "{}", out.deviation);
        assert!((out.volatility - 0.05999).abs() < 1e-5);
    }

    #[test]
    fn draw_against_zero_deviation_equal() {
        let out = glicko2_update(r(1500.0, 0.0), &[(r(1500.0, 0.0), 0.5)], 0.5);
        assert!((out.rating - 1500.0).abs() < 1e-9);
    }
}
