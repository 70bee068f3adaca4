use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::evaluators::Verdict;

const CATALOG: &str = include_str!("../../resources/environments.json");

/// Parameters of one synthetic judging environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub name: String,
    /// Std of the judge noise added to the performance gap.
    pub judge_beta: f64,
    pub sigma_std: f64,
    pub sigma_ext: f64,
    pub mu_penalty: f64,
    pub sigma_penalty: f64,
    pub tie_threshold: f64,
    pub p_extreme: f64,
    #[serde(default)]
    pub prompt_difficulty_std: f64,
    #[serde(default)]
    pub prompt_tie_sensitivity_std: f64,
    #[serde(default)]
    pub prompt_cluster_count: u32,
    #[serde(default)]
    pub prompt_cluster_scale: f64,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let scales = [
            self.judge_beta,
            self.sigma_std,
            self.sigma_ext,
            self.sigma_penalty,
            self.tie_threshold,
            self.prompt_difficulty_std,
            self.prompt_tie_sensitivity_std,
            self.prompt_cluster_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() || *s == f64::INFINITY) || *s < 0.0) {
            return Err(SimError::InvalidSpec(format!("{}: scale parameters must be >= 0", self.name)));
        }
        if !self.mu_penalty.is_finite() {
            return Err(SimError::InvalidSpec(format!("{}: mu_penalty must be finite", self.name)));
        }
        if !(0.0..=1.0).contains(&self.p_extreme) {
            return Err(SimError::InvalidSpec(format!("{}: p_extreme outside [0, 1]", self.name)));
        }
        if self.prompt_cluster_scale > 0.0 && self.prompt_cluster_count == 0 {
            return Err(SimError::InvalidSpec(format!("{}: cluster scale without clusters", self.name)));
        }
        Ok(())
    }

    /// Deterministic outcomes: the higher skill always wins, equal skills tie.
    pub fn noiseless(name: &str) -> Self {
        Self {
            name: name.to_string(),
            judge_beta: 0.0,
            sigma_std: 0.0,
            sigma_ext: 0.0,
            mu_penalty: 0.0,
            sigma_penalty: 0.0,
            tie_threshold: 0.0,
            p_extreme: 0.0,
            prompt_difficulty_std: 0.0,
            prompt_tie_sensitivity_std: 0.0,
            prompt_cluster_count: 0,
            prompt_cluster_scale: 0.0,
        }
    }
}

/// The six shipped environments, in catalog order.
pub fn catalog() -> Vec<EnvironmentSpec> {
    serde_json::from_str(CATALOG).expect("shipped environment catalog is valid")
}

pub fn environment(name: &str) -> Option<EnvironmentSpec> {
    catalog().into_iter().find(|e| e.name == name)
}

/// Prompt-specific shifts for one comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptEffect {
    /// Added to side A's performance (difficulty and cluster bias).
    pub offset_a: f64,
    pub offset_b: f64,
    /// Added to the tie threshold.
    pub tie_offset: f64,
}

impl PromptEffect {
    pub fn swapped(self) -> Self {
        Self {
            offset_a: self.offset_b,
            offset_b: self.offset_a,
            tie_offset: self.tie_offset,
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("validated scale")
}

fn performance(env: &EnvironmentSpec, base: f64, rng: &mut impl Rng) -> f64 {
    let extreme = env.p_extreme > 0.0 && rng.gen::<f64>() < env.p_extreme;
    let std = if extreme { env.sigma_ext } else { env.sigma_std };
    let mut perf = base + normal(0.0, std).sample(rng);
    if extreme {
        perf += normal(env.mu_penalty, env.sigma_penalty).sample(rng);
    }
    perf
}

/// Draws one prompt-level verdict between two models.
///
/// Random draws are made for the sides in a canonical order (weaker
/// effective skill first), so swapping the inputs under the same random
/// stream yields exactly the mirrored verdict.
pub fn sample_outcome(
    env: &EnvironmentSpec,
    skill_a: f64,
    skill_b: f64,
    effect: &PromptEffect,
    rng: &mut impl Rng,
) -> Verdict {
    let base_a = skill_a + effect.offset_a;
    let base_b = skill_b + effect.offset_b;
    let a_first = base_a <= base_b;
    let (lo, hi) = if a_first { (base_a, base_b) } else { (base_b, base_a) };
    let perf_lo = performance(env, lo, rng);
    let perf_hi = performance(env, hi, rng);
    let gap = perf_hi - perf_lo + normal(0.0, env.judge_beta).sample(rng);
    let threshold = (env.tie_threshold + effect.tie_offset).max(0.0);
    let verdict_hi = if gap.abs() < threshold || gap == 0.0 {
        Verdict::Tie
    } else if gap > 0.0 {
        Verdict::A
    } else {
        Verdict::B
    };
    // verdict_hi labels the stronger side as A
    if a_first {
        verdict_hi.mirrored()
    } else {
        verdict_hi
    }
}
