//! Monte Carlo benchmark: synthetic outcomes, model injection, trial
//! orchestration and metrics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ModelIdx, Rater, RaterError};
use crate::normal;
use crate::rating::{MicroBatchResult, RatingHyperParams};

mod env;
pub mod metrics;
pub mod report;
mod systems;

pub use env::{catalog, environment, sample_outcome, EnvironmentSpec, PromptEffect};
pub use metrics::{Discovery, MetricError};
pub use report::{BenchmarkReport, SystemSummary};
pub use systems::{ArenaRater, SystemKind};

use crate::evaluators::Verdict;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Rater(#[from] RaterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A model entering the arena mid-run with a skill drawn from a band of the
/// true-skill distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// 1-based round before which the model is added.
    pub round: u64,
    pub percentile_low: f64,
    pub percentile_high: f64,
}

impl Injection {
    /// A model from the top decile.
    pub fn strong(round: u64) -> Self {
        Self {
            round,
            percentile_low: 0.9,
            percentile_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSpec {
    pub n_models: usize,
    pub skill_mean: f64,
    pub skill_std: f64,
    pub dynamic_rounds: u64,
    pub static_rounds: u64,
    pub n_trials: usize,
    pub injections: Vec<Injection>,
    pub checkpoints: Vec<u64>,
    pub topk: Vec<usize>,
    /// Distinct prompts per trial from which every batch samples.
    pub prompt_pool: usize,
    pub stability_window: u64,
    pub seed: u64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            n_models: 50,
            skill_mean: 1000.0,
            skill_std: 250.0,
            dynamic_rounds: 3000,
            static_rounds: 50,
            n_trials: 20,
            injections: vec![Injection::strong(1000)],
            checkpoints: vec![500, 1500, 3000],
            topk: vec![1, 3],
            prompt_pool: 500,
            stability_window: 10,
            seed: 20260101,
        }
    }
}

impl TrialSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.n_models < 2 {
            return bad("need at least two initial models".into());
        }
        if self.dynamic_rounds == 0 {
            return bad("dynamic_rounds must be positive".into());
        }
        if !(self.skill_std >= 0.0 && self.skill_std.is_finite() && self.skill_mean.is_finite()) {
            return bad("invalid skill distribution".into());
        }
        if self.prompt_pool == 0 {
            return bad("prompt_pool must be positive".into());
        }
        for inj in &self.injections {
            if inj.round < 2 || inj.round > self.dynamic_rounds {
                return bad(format!("injection round {} outside the dynamic phase", inj.round));
            }
            if !(0.0 <= inj.percentile_low && inj.percentile_low < inj.percentile_high && inj.percentile_high <= 1.0) {
                return bad(format!("invalid percentile band at round {}", inj.round));
            }
        }
        for &c in &self.checkpoints {
            if c == 0 || c > self.dynamic_rounds + self.static_rounds {
                return bad(format!("checkpoint {c} outside the run"));
            }
        }
        Ok(())
    }

    pub fn total_rounds(&self) -> u64 {
        self.dynamic_rounds + self.static_rounds
    }

    /// Seed of trial `index`, shared by every system so trials are paired.
    pub fn trial_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng.gen()
    }
}

/// Per-trial results of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trial: usize,
    pub srcc_at: BTreeMap<u64, f64>,
    pub kendall_at: BTreeMap<u64, f64>,
    /// `(round, k, overlap)`.
    pub topk_overlap: Vec<(u64, usize, f64)>,
    pub discoveries: Vec<Discovery>,
    /// For injected models that are the true best at the end: whether the
    /// system ranks them first at the end.
    pub top1_after_injection: Vec<bool>,
    pub final_srcc: f64,
    pub batches: u64,
}

struct Prompt {
    tie_offset: f64,
    cluster: usize,
}

/// Trial world: true skills and prompt effects, drawn from the trial seed
/// alone so every system faces the same world.
struct World {
    skills: Vec<f64>,
    prompts: Vec<Prompt>,
    // [prompt][model]
    difficulty: Vec<Vec<f64>>,
    // [cluster][model]
    cluster_bias: Vec<Vec<f64>>,
}

impl World {
    fn draw(env: &EnvironmentSpec, spec: &TrialSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skill = Normal::new(spec.skill_mean, spec.skill_std).expect("validated");
        let mut skills: Vec<f64> = (0..spec.n_models).map(|_| skill.sample(&mut rng)).collect();
        for inj in &spec.injections {
            let u = rng.gen_range(inj.percentile_low..inj.percentile_high).clamp(1e-9, 1.0 - 1e-9);
            skills.push(spec.skill_mean + spec.skill_std * normal::quantile(u));
        }
        let n = skills.len();
        let clusters = env.prompt_cluster_count.max(1) as usize;
        let tie = Normal::new(0.0, env.prompt_tie_sensitivity_std).expect("validated");
        let diff = Normal::new(0.0, env.prompt_difficulty_std).expect("validated");
        let bias = Normal::new(0.0, env.prompt_cluster_scale).expect("validated");
        let prompts = (0..spec.prompt_pool)
            .map(|_| Prompt {
                tie_offset: tie.sample(&mut rng),
                cluster: rng.gen_range(0..clusters),
            })
            .collect();
        let difficulty = (0..spec.prompt_pool)
            .map(|_| (0..n).map(|_| diff.sample(&mut rng)).collect())
            .collect();
        let cluster_bias = (0..clusters)
            .map(|_| (0..n).map(|_| bias.sample(&mut rng)).collect())
            .collect();
        Self {
            skills,
            prompts,
            difficulty,
            cluster_bias,
        }
    }

    fn effect(&self, prompt: usize, a: ModelIdx, b: ModelIdx) -> PromptEffect {
        let p = &self.prompts[prompt];
        let bias = &self.cluster_bias[p.cluster];
        PromptEffect {
            offset_a: self.difficulty[prompt][a] + bias[a],
            offset_b: self.difficulty[prompt][b] + bias[b],
            tie_offset: p.tie_offset,
        }
    }

    fn batch(&self, env: &EnvironmentSpec, a: ModelIdx, b: ModelIdx, size: u32, rng: &mut ChaCha8Rng) -> MicroBatchResult {
        let mut out = MicroBatchResult::default();
        for _ in 0..size {
            let prompt = rng.gen_range(0..self.prompts.len());
            let effect = self.effect(prompt, a, b);
            match sample_outcome(env, self.skills[a], self.skills[b], &effect, rng) {
                Verdict::A => out.wins_a += 1,
                Verdict::B => out.wins_b += 1,
                Verdict::Tie => out.ties += 1,
            }
        }
        out
    }

    /// Present models ordered by true skill, best first.
    fn true_order(&self, present: &[ModelIdx]) -> Vec<ModelIdx> {
        let mut order = present.to_vec();
        order.sort_by(|&x, &y| self.skills[y].total_cmp(&self.skills[x]).then(x.cmp(&y)));
        order
    }
}

fn uniform_pair(n: &[ModelIdx], rng: &mut ChaCha8Rng) -> (ModelIdx, ModelIdx) {
    let i = rng.gen_range(0..n.len());
    let mut j = rng.gen_range(0..n.len() - 1);
    if j >= i {
        j += 1;
    }
    (n[i], n[j])
}

/// Runs one trial of `system` and scores it against the true skills.
pub fn run_trial(
    env: &EnvironmentSpec,
    spec: &TrialSpec,
    system: SystemKind,
    hp: &RatingHyperParams,
    trial: usize,
) -> Result<MetricsReport, SimError> {
    let mut rater = system.build(hp, spec.trial_seed(trial));
    run_trial_with(env, spec, rater.as_mut(), hp.batch_size, trial)
}

/// Runs one trial on an arbitrary rater.
pub fn run_trial_with(
    env: &EnvironmentSpec,
    spec: &TrialSpec,
    rater: &mut dyn Rater,
    batch_size: u32,
    trial: usize,
) -> Result<MetricsReport, SimError> {
    env.validate()?;
    spec.validate()?;
    let seed = spec.trial_seed(trial);
    let world = World::draw(env, spec, seed);
    let mut outcome_rng = ChaCha8Rng::seed_from_u64(seed);
    outcome_rng.set_stream(1);
    let mut pair_rng = ChaCha8Rng::seed_from_u64(seed);
    pair_rng.set_stream(2);

    rater.reset();
    let mut present: Vec<ModelIdx> = (0..spec.n_models).collect();
    for &m in &present {
        rater.inject(m)?;
    }
    let mut injected: Vec<(ModelIdx, u64)> = Vec::new();
    let mut traces: Vec<Vec<(u64, usize)>> = Vec::new();
    let mut report = MetricsReport {
        trial,
        srcc_at: BTreeMap::new(),
        kendall_at: BTreeMap::new(),
        topk_overlap: Vec::new(),
        discoveries: Vec::new(),
        top1_after_injection: Vec::new(),
        final_srcc: 0.0,
        batches: 0,
    };

    for round in 1..=spec.total_rounds() {
        for (k, inj) in spec.injections.iter().enumerate() {
            if inj.round == round {
                let m = spec.n_models + k;
                rater.inject(m)?;
                present.push(m);
                injected.push((m, round));
                traces.push(Vec::new());
            }
        }

        let (a, b) = match rater.propose(&mut pair_rng) {
            Some(pair) => pair,
            None => uniform_pair(&present, &mut pair_rng),
        };
        let batch = world.batch(env, a, b, batch_size, &mut outcome_rng);
        rater.observe(a, b, &batch)?;
        report.batches += 1;

        let checkpoint = spec.checkpoints.contains(&round);
        if checkpoint || !injected.is_empty() || round == spec.total_rounds() {
            let ranking = rater.rank();
            for (t, &(m, _)) in traces.iter_mut().zip(&injected) {
                let pos = ranking.iter().position(|&x| x == m).expect("injected model ranked") + 1;
                t.push((round, pos));
            }
            if checkpoint || round == spec.total_rounds() {
                let truth = world.true_order(&present);
                let srcc = metrics::order_spearman(&truth, &ranking)?;
                if checkpoint {
                    report.srcc_at.insert(round, srcc);
                    report.kendall_at.insert(round, metrics::order_kendall(&truth, &ranking)?);
                    for &k in spec.topk.iter().filter(|&&k| k <= truth.len()) {
                        report.topk_overlap.push((round, k, metrics::topk_overlap(&truth, &ranking, k)?));
                    }
                }
                if round == spec.total_rounds() {
                    report.final_srcc = srcc;
                    for (&(m, inj_round), trace) in injected.iter().zip(&traces) {
                        let target = truth.iter().position(|&x| x == m).unwrap() + 1;
                        report.discoveries.push(metrics::discovery_metrics(
                            trace,
                            inj_round,
                            target,
                            spec.stability_window,
                        )?);
                        if target == 1 {
                            report.top1_after_injection.push(ranking[0] == m);
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Runs every `(environment, system, trial)` combination in parallel.
pub fn run_benchmark(
    envs: &[EnvironmentSpec],
    systems: &[SystemKind],
    spec: &TrialSpec,
    hp: &RatingHyperParams,
) -> Result<BenchmarkReport, SimError> {
    for env in envs {
        env.validate()?;
    }
    spec.validate()?;
    hp.validate().map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let jobs: Vec<(usize, usize, usize)> = (0..envs.len())
        .flat_map(|e| (0..systems.len()).flat_map(move |s| (0..spec.n_trials).map(move |t| (e, s, t))))
        .collect();
    let results: Vec<((usize, usize, usize), MetricsReport)> = jobs
        .par_iter()
        .map(|&(e, s, t)| run_trial(&envs[e], spec, systems[s], hp, t).map(|r| ((e, s, t), r)))
        .collect::<Result<_, _>>()?;

    let mut grouped: BTreeMap<(usize, usize), Vec<MetricsReport>> = BTreeMap::new();
    for ((e, s, _), r) in results {
        grouped.entry((e, s)).or_default().push(r);
    }
    let summaries = grouped
        .into_iter()
        .map(|((e, s), mut trials)| {
            trials.sort_by_key(|r| r.trial);
            SystemSummary::from_trials(&envs[e].name, systems[s], trials)
        })
        .collect();
    Ok(BenchmarkReport {
        spec: spec.clone(),
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> TrialSpec {
        TrialSpec {
            n_models: 8,
            dynamic_rounds: 600,
            static_rounds: 20,
            n_trials: 2,
            injections: vec![Injection::strong(300)],
            checkpoints: vec![100, 600],
            ..TrialSpec::default()
        }
    }

    #[test]
    fn noiseless_env_sorts_exactly() {
        let env = EnvironmentSpec::noiseless("clean");
        let spec = TrialSpec {
            injections: vec![],
            checkpoints: vec![500],
            dynamic_rounds: 500,
            ..small_spec()
        };
        let r = run_trial(&env, &spec, SystemKind::Ours, &RatingHyperParams::default(), 0).unwrap();
        assert_eq!(r.srcc_at[&500], 1.0);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let env = environment("prompt_clustered_stress").unwrap();
        let spec = small_spec();
        let hp = RatingHyperParams::default();
        for system in SystemKind::BENCHMARK {
            let a = run_trial(&env, &spec, system, &hp, 1).unwrap();
            let b = run_trial(&env, &spec, system, &hp, 1).unwrap();
            assert_eq!(a, b, "{}", system.name());
        }
    }

    #[test]
    fn budget_parity() {
        let env = environment("reference").unwrap();
        let spec = small_spec();
        let hp = RatingHyperParams::default();
        for system in SystemKind::BENCHMARK {
            let r = run_trial(&env, &spec, system, &hp, 0).unwrap();
            assert_eq!(r.batches, spec.total_rounds(), "{}", system.name());
            assert_eq!(r.discoveries.len(), 1);
            for v in r.srcc_at.values().chain(r.kendall_at.values()) {
                assert!((-1.0..=1.0).contains(v));
            }
            for &(_, _, o) in &r.topk_overlap {
                assert!((0.0..=1.0).contains(&o));
            }
        }
    }

    #[test]
    fn injected_skills_come_from_band() {
        let env = environment("reference").unwrap();
        let spec = small_spec();
        for t in 0..20 {
            let w = World::draw(&env, &spec, spec.trial_seed(t));
            let s = w.skills[spec.n_models];
            assert!(s >= 1000.0 + 250.0 * normal::quantile(0.9) - 1e-6);
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec();
        spec.injections = vec![Injection::strong(700)];
        assert!(spec.validate().is_err());
        spec.injections = vec![];
        spec.checkpoints = vec![10_000];
        assert!(spec.validate().is_err());
    }
}
