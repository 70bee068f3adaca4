//! Gaussian rating state and the micro-batch posterior updates.
//!
//! A pair of models is compared on a micro-batch of prompts. The prompt-level
//! tallies are kept as descriptive statistics, while the posterior `(mu, sigma)`
//! moves exactly once per batch: a weighted pairwise Bayesian update when the
//! batch is decisive, a soft pull toward the midpoint when it is a tie.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal;

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
}

/// Per-model posterior and bookkeeping counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingState {
    pub mu: f64,
    pub sigma: f64,
    /// Valid micro-batches this model took part in. Drives pivot selection
    /// and the warmup of the uncertainty penalty.
    pub batches_evaluated: u64,
    /// All micro-batches, including invalid (empty) ones.
    #[serde(default)]
    pub batches_attempted: u64,
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub prompts_seen: u64,
}

impl RatingState {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            batches_evaluated: 0,
            batches_attempted: 0,
            wins: 0,
            losses: 0,
            ties: 0,
            prompts_seen: 0,
        }
    }

    pub fn prior(hp: &RatingHyperParams) -> Self {
        Self::new(hp.mu0, hp.sigma0)
    }

    fn check_finite(&self) -> Result<(), RatingError> {
        if !self.mu.is_finite() {
            return Err(RatingError::NonFinite("mu"));
        }
        if !self.sigma.is_finite() {
            return Err(RatingError::NonFinite("sigma"));
        }
        Ok(())
    }
}

/// Hyperparameters of the rating system. Defaults are the frozen
/// configuration used for every leaderboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingHyperParams {
    pub mu0: f64,
    pub sigma0: f64,
    /// Performance-noise scale of the pairwise likelihood.
    pub beta: f64,
    /// Conservativeness of the displayed score.
    pub eta: f64,
    /// Exploration strength of opponent selection.
    pub alpha: f64,
    /// Uncertainty floor.
    pub sigma_conv: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// Multiplicative variance shrink applied on tie batches.
    pub tie_shrink: f64,
    /// Fraction of the gap closed on tie batches.
    pub tie_pull: f64,
    pub weight_slope: f64,
    pub weight_max: f64,
    pub gamma_sigma: f64,
    /// Batches until the full uncertainty penalty applies; `<= 0` disables warmup.
    pub warmup_batches: i64,
    pub warmup_min_ratio: f64,
    pub batch_size: u32,
}

impl Default for RatingHyperParams {
    fn default() -> Self {
        Self {
            mu0: 1000.0,
            sigma0: 300.0,
            beta: 70.0,
            eta: 3.0,
            alpha: 190.0,
            sigma_conv: 20.0,
            p_low: 0.42,
            p_high: 0.58,
            tie_shrink: 0.98,
            tie_pull: 0.05,
            weight_slope: 2.0,
            weight_max: 2.0,
            gamma_sigma: 1.0,
            warmup_batches: 20,
            warmup_min_ratio: 0.20,
            batch_size: 15,
        }
    }
}

impl RatingHyperParams {
    pub fn validate(&self) -> Result<(), RatingError> {
        let bad = |msg: &str| Err(RatingError::InvalidParams(msg.to_string()));
        let all = [
            self.mu0,
            self.sigma0,
            self.beta,
            self.eta,
            self.alpha,
            self.sigma_conv,
            self.p_low,
            self.p_high,
            self.tie_shrink,
            self.tie_pull,
            self.weight_slope,
            self.weight_max,
            self.gamma_sigma,
            self.warmup_min_ratio,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if !(0.0 < self.p_low && self.p_low < 0.5 && 0.5 < self.p_high && self.p_high < 1.0) {
            return bad("require 0 < p_low < 0.5 < p_high < 1");
        }
        if !(self.tie_shrink > 0.0 && self.tie_shrink <= 1.0) {
            return bad("require 0 < tie_shrink <= 1");
        }
        if !(0.0..=1.0).contains(&self.tie_pull) {
            return bad("require 0 <= tie_pull <= 1");
        }
        if self.weight_max < 1.0 {
            return bad("require weight_max >= 1");
        }
        if self.sigma_conv <= 0.0 || self.sigma0 <= 0.0 || self.beta <= 0.0 {
            return bad("sigma_conv, sigma0 and beta must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    /// Uncertainty multiplier after `batches` evaluated micro-batches.
    pub fn effective_eta(&self, batches: u64) -> f64 {
        if self.warmup_batches <= 0 {
            return self.eta;
        }
        let ratio = batches as f64 / self.warmup_batches as f64;
        self.eta * ratio.clamp(self.warmup_min_ratio, 1.0)
    }
}

/// Leaderboard value `mu - eta_eff * sigma`.
pub fn conservative_score(state: &RatingState, hp: &RatingHyperParams) -> f64 {
    state.mu - hp.effective_eta(state.batches_evaluated) * state.sigma
}

/// Prompt-level tallies of one micro-batch, from the point of view of model A.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroBatchResult {
    pub wins_a: u32,
    pub wins_b: u32,
    pub ties: u32,
}

impl MicroBatchResult {
    pub fn new(wins_a: u32, wins_b: u32, ties: u32) -> Self {
        Self {
            wins_a,
            wins_b,
            ties,
        }
    }

    pub fn total(&self) -> u32 {
        self.wins_a + self.wins_b + self.ties
    }

    pub fn mirrored(&self) -> Self {
        Self::new(self.wins_b, self.wins_a, self.ties)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacroVerdict {
    WinA,
    WinB,
    Tie,
    Invalid,
}

impl MacroVerdict {
    pub fn mirrored(self) -> Self {
        match self {
            MacroVerdict::WinA => MacroVerdict::WinB,
            MacroVerdict::WinB => MacroVerdict::WinA,
            other => other,
        }
    }
}

/// Resolved batch result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroOutcome {
    pub verdict: MacroVerdict,
    /// Empirical winning rate of A, ties counting half. Zero for invalid batches.
    pub p_a: f64,
    pub weight: f64,
}

/// Resolves a micro-batch into a ternary macro outcome and its confidence weight.
///
/// The decisiveness thresholds are strict: `p_a == p_high` or `p_a == p_low`
/// is a tie.
pub fn aggregate_micro_batch(result: &MicroBatchResult, hp: &RatingHyperParams) -> MacroOutcome {
    let n = result.total();
    if n == 0 {
        return MacroOutcome {
            verdict: MacroVerdict::Invalid,
            p_a: 0.0,
            weight: 1.0,
        };
    }
    let rate = |wins: u32| (wins as f64 + 0.5 * result.ties as f64) / n as f64;
    let p_a = rate(result.wins_a);
    let (verdict, p_w) = if p_a > hp.p_high {
        (MacroVerdict::WinA, p_a)
    } else if p_a < hp.p_low {
        // 1 - p_a, taken from B's own tally so relabeling gives identical weights
        (MacroVerdict::WinB, rate(result.wins_b))
    } else {
        (MacroVerdict::Tie, 0.5)
    };
    let weight = hp.weight_max.min(1.0 + hp.weight_slope * (p_w - 0.5));
    MacroOutcome {
        verdict,
        p_a,
        weight,
    }
}

/// Truncated Gaussian correction terms `(V, W)` for a win at standardized gap `t`.
pub fn win_correction(t: f64) -> (f64, f64) {
    let v = if t < -1.0 {
        normal::pdf_over_cdf(t)
    } else {
        normal::pdf(t) / normal::cdf(t).max(1e-12)
    };
    (v, v * (v + t))
}

/// Weighted pairwise Bayesian update of a decisive batch.
///
/// `weight` scales the mean shift linearly and strengthens the variance
/// shrinkage by `min(1.2, 1 + 0.5 (weight - 1))`. Both deviations are floored
/// at `sigma_conv`.
pub fn decisive_update(
    winner: &RatingState,
    loser: &RatingState,
    weight: f64,
    hp: &RatingHyperParams,
) -> Result<(RatingState, RatingState), RatingError> {
    winner.check_finite()?;
    loser.check_finite()?;
    if !weight.is_finite() {
        return Err(RatingError::NonFinite("weight"));
    }

    let var_w = winner.sigma * winner.sigma;
    let var_l = loser.sigma * loser.sigma;
    let c2 = var_w + var_l + 2.0 * hp.beta * hp.beta;
    let c = c2.sqrt();
    let t = ((winner.mu - loser.mu) / c).clamp(-5.0, 5.0);
    let (v, w) = win_correction(t);
    let gamma = (1.0 + 0.5 * (weight - 1.0)).min(1.2);

    let floor = hp.sigma_conv * hp.sigma_conv;
    let shrink = |var: f64| {
        // The factor can go negative for very lopsided variances; the floor
        // dominates either way.
        let factor = (1.0 - var / c2 * w * gamma).max(0.0);
        (var * factor).max(floor).sqrt()
    };

    let mut new_w = winner.clone();
    let mut new_l = loser.clone();
    new_w.mu = winner.mu + var_w / c * v * weight;
    new_l.mu = loser.mu - var_l / c * v * weight;
    new_w.sigma = shrink(var_w);
    new_l.sigma = shrink(var_l);
    Ok((new_w, new_l))
}

/// Soft tie update: both means move `tie_pull` of the way toward their
/// midpoint and both variances shrink by `tie_shrink`, floored at `sigma_conv`.
pub fn tie_update(
    a: &RatingState,
    b: &RatingState,
    hp: &RatingHyperParams,
) -> (RatingState, RatingState) {
    // mu_a' = mu_a + (rho/2)(mu_b - mu_a); algebraically equal to the
    // midpoint form but the two shifts are exact negations of each other,
    // which keeps the sum of means intact.
    let shift = 0.5 * hp.tie_pull * (b.mu - a.mu);
    let floor = hp.sigma_conv * hp.sigma_conv;
    let shrink = |sigma: f64| (hp.tie_shrink * sigma * sigma).max(floor).sqrt();

    let mut new_a = a.clone();
    let mut new_b = b.clone();
    new_a.mu = a.mu + shift;
    new_b.mu = b.mu - shift;
    new_a.sigma = shrink(a.sigma);
    new_b.sigma = shrink(b.sigma);
    (new_a, new_b)
}

/// Records one micro-batch for the pair and performs the single posterior
/// update selected by its macro verdict.
///
/// Invalid (empty) batches only bump `batches_attempted`.
pub fn apply_batch(
    a: &RatingState,
    b: &RatingState,
    batch: &MicroBatchResult,
    hp: &RatingHyperParams,
) -> Result<(RatingState, RatingState, MacroOutcome), RatingError> {
    let outcome = aggregate_micro_batch(batch, hp);

    let (mut new_a, mut new_b) = match outcome.verdict {
        MacroVerdict::WinA => decisive_update(a, b, outcome.weight, hp)?,
        MacroVerdict::WinB => {
            let (nb, na) = decisive_update(b, a, outcome.weight, hp)?;
            (na, nb)
        }
        MacroVerdict::Tie => tie_update(a, b, hp),
        MacroVerdict::Invalid => (a.clone(), b.clone()),
    };

    let n = batch.total() as u64;
    for (state, won, lost) in [
        (&mut new_a, batch.wins_a, batch.wins_b),
        (&mut new_b, batch.wins_b, batch.wins_a),
    ] {
        state.batches_attempted += 1;
        if outcome.verdict != MacroVerdict::Invalid {
            state.batches_evaluated += 1;
        }
        state.wins += won as u64;
        state.losses += lost as u64;
        state.ties += batch.ties as u64;
        state.prompts_seen += n;
    }
    Ok((new_a, new_b, outcome))
}
