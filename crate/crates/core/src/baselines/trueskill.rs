//! Two-player TrueSkill with draws. The TrueSkill2 variant only changes the
//! dynamics: the per-game skill drift shrinks with experience.

use serde::{Deserialize, Serialize};

use super::{order_by_key, ModelIdx, Outcome, Rater, RaterError, Roster};
use crate::normal;
use crate::rating::MicroBatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSkillParams {
    pub mu0: f64,
    pub sigma0: f64,
    pub beta: f64,
    pub tau: f64,
    /// Draw probability used before any outcome has been seen.
    pub draw_prior: f64,
    /// Scale the drift by `1 + experience_boost / (1 + games)`.
    pub experience_boost: f64,
}

impl Default for TrueSkillParams {
    fn default() -> Self {
        Self {
            mu0: 25.0,
            sigma0: 25.0 / 3.0,
            beta: 25.0 / 6.0,
            tau: 25.0 / 300.0,
            draw_prior: 0.1,
            experience_boost: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrueSkill {
    pub params: TrueSkillParams,
    name: &'static str,
    roster: Roster,
    skills: Vec<Gaussian>,
    games: Vec<u64>,
    draws_seen: u64,
    outcomes_seen: u64,
}

const MIN_DRAW: f64 = 1e-3;
const MAX_DRAW: f64 = 0.95;

// Additive correction of the mean for a win, and multiplicative variance
// correction, given the standardized gap `t` and draw margin `eps`.
pub(crate) fn v_win(t: f64, eps: f64) -> f64 {
    let x = t - eps;
    let denom = normal::cdf(x);
    if denom < 1e-300 {
        -x
    } else {
        normal::pdf(x) / denom
    }
}

pub(crate) fn w_win(t: f64, eps: f64) -> f64 {
    let v = v_win(t, eps);
    (v * (v + t - eps)).clamp(0.0, 1.0)
}

pub(crate) fn v_draw(t: f64, eps: f64) -> f64 {
    let abs_t = t.abs();
    let denom = normal::cdf(eps - abs_t) - normal::cdf(-eps - abs_t);
    let v = if denom < 1e-300 {
        if abs_t > eps {
            -abs_t + eps
        } else {
            0.0
        }
    } else {
        (normal::pdf(-eps - abs_t) - normal::pdf(eps - abs_t)) / denom
    };
    if t < 0.0 {
        -v
    } else {
        v
    }
}

pub(crate) fn w_draw(t: f64, eps: f64) -> f64 {
    let abs_t = t.abs();
    let denom = normal::cdf(eps - abs_t) - normal::cdf(-eps - abs_t);
    if denom < 1e-300 {
        return 1.0;
    }
    let v = v_draw(abs_t, eps);
    let w = v * v
        + ((eps - abs_t) * normal::pdf(eps - abs_t) + (eps + abs_t) * normal::pdf(eps + abs_t)) / denom;
    w.clamp(0.0, 1.0)
}

impl TrueSkill {
    pub fn new(params: TrueSkillParams, name: &'static str) -> Self {
        Self {
            params,
            name,
            roster: Roster::default(),
            skills: Vec::new(),
            games: Vec::new(),
            draws_seen: 0,
            outcomes_seen: 0,
        }
    }

    pub fn trueskill() -> Self {
        Self::new(TrueSkillParams::default(), "TrueSkill")
    }

    pub fn trueskill2() -> Self {
        Self::new(
            TrueSkillParams {
                experience_boost: 4.0,
                ..TrueSkillParams::default()
            },
            "TrueSkill2",
        )
    }

    pub fn skill(&self, model: ModelIdx) -> Result<Gaussian, RaterError> {
        Ok(self.skills[self.roster.slot(model)?])
    }

    /// Running tie rate, bounded away from 0 and 1.
    pub fn draw_probability(&self) -> f64 {
        let p = if self.outcomes_seen == 0 {
            self.params.draw_prior
        } else {
            self.draws_seen as f64 / self.outcomes_seen as f64
        };
        p.clamp(MIN_DRAW, MAX_DRAW)
    }

    pub fn draw_margin(&self) -> f64 {
        normal::quantile((self.draw_probability() + 1.0) / 2.0) * 2f64.sqrt() * self.params.beta
    }

    fn drift(&self, slot: usize) -> f64 {
        self.params.tau * (1.0 + self.params.experience_boost / (1.0 + self.games[slot] as f64))
    }

    pub fn update(&mut self, a: ModelIdx, b: ModelIdx, outcome: Outcome) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        let eps_raw = self.draw_margin();
        self.outcomes_seen += 1;
        if outcome == Outcome::Tie {
            self.draws_seen += 1;
        }
        let (w, l) = match outcome {
            Outcome::WinB => (j, i),
            _ => (i, j),
        };
        let var_w = self.skills[w].sigma.powi(2) + self.drift(w).powi(2);
        let var_l = self.skills[l].sigma.powi(2) + self.drift(l).powi(2);
        let c = (2.0 * self.params.beta.powi(2) + var_w + var_l).sqrt();
        let t = (self.skills[w].mu - self.skills[l].mu) / c;
        let eps = eps_raw / c;
        let (v, wf) = if outcome == Outcome::Tie {
            (v_draw(t, eps), w_draw(t, eps))
        } else {
            (v_win(t, eps), w_win(t, eps))
        };
        self.skills[w] = Gaussian {
            mu: self.skills[w].mu + var_w / c * v,
            sigma: (var_w * (1.0 - var_w / (c * c) * wf)).max(1e-12).sqrt(),
        };
        self.skills[l] = Gaussian {
            mu: self.skills[l].mu - var_l / c * v,
            sigma: (var_l * (1.0 - var_l / (c * c) * wf)).max(1e-12).sqrt(),
        };
        self.games[i] += 1;
        self.games[j] += 1;
        Ok(())
    }
}

impl Rater for TrueSkill {
    fn name(&self) -> &'static str {
        self.name
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.skills.push(Gaussian {
            mu: self.params.mu0,
            sigma: self.params.sigma0,
        });
        self.games.push(0);
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
        order_by_key(&self.roster.models, |m| self.skills[self.roster.slot(m).unwrap()].mu)
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.skills.clear();
        self.games.clear();
        self.draws_seen = 0;
        self.outcomes_seen = 0;
    }
}
