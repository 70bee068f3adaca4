//! Outcome sources for live arena rounds. Every source derives its
//! randomness from (seed, dimension, round), so resumed runs draw exactly
//! what an uninterrupted run would have drawn.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use arena_core::evaluators::judge::{judge_client_compare, HttpJudge, JudgeBackend};
use arena_core::evaluators::{
    aesthetic_compare, perceptual_compare, Dimension, PairwiseOutcome, ScoreSampleSet, AESTHETIC_TIE_THRESHOLD,
};
use arena_core::scheduler::{BatchRequest, OutcomeSource, SourceError};
use arena_core::sim::{environment, sample_outcome, EnvironmentSpec, PromptEffect};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::config::{ModelEntry, ProviderConfig};

fn round_rng(seed: u64, dim: Dimension, round: u64) -> ChaCha8Rng {
    let salt = match dim {
        Dimension::Alignment => 0x5851_f42d_4c95_7f2d,
        Dimension::Perceptual => 0x1405_7b7e_f767_814f,
        Dimension::Aesthetic => 0x2545_f491_4f6c_dd1d,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(round);
    rng
}

fn source_err(msg: String) -> SourceError {
    msg.into()
}

pub struct MockProvider {
    env: EnvironmentSpec,
    skills: BTreeMap<String, f64>,
    seed: u64,
    dimension: Dimension,
}

impl MockProvider {
    /// Models without an explicit skill are spaced 40 points apart by
    /// roster position.
    pub fn new(env: EnvironmentSpec, models: &[ModelEntry], seed: u64, dimension: Dimension) -> Self {
        let skills = models
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.clone(), m.skill.unwrap_or(1000.0 + 40.0 * i as f64)))
            .collect();
        Self {
            env,
            skills,
            seed,
            dimension,
        }
    }

    fn skill(&self, id: &str) -> Result<f64, SourceError> {
        self.skills
            .get(id)
            .copied()
            .ok_or_else(|| source_err(format!("mock provider has no skill for {id}")))
    }
}

impl OutcomeSource for MockProvider {
    fn evaluate(&mut self, req: &BatchRequest) -> Result<Vec<PairwiseOutcome>, SourceError> {
        let (a, b) = (self.skill(req.model_a)?, self.skill(req.model_b)?);
        let mut rng = round_rng(self.seed, self.dimension, req.round);
        Ok((0..req.batch_size)
            .map(|i| {
                let v = sample_outcome(&self.env, a, b, &PromptEffect::default(), &mut rng);
                PairwiseOutcome::new(v, self.dimension, format!("mock-{}-{i}", req.round))
            })
            .collect())
    }
}

/// Shared prompts of two models, sampled without replacement.
fn pick_prompts<'a>(
    a: &'a BTreeMap<String, impl Sized>,
    b: &BTreeMap<String, impl Sized>,
    n: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a String> {
    let shared: Vec<&String> = a.keys().filter(|k| b.contains_key(*k)).collect();
    shared.choose_multiple(rng, n as usize).copied().collect()
}

pub struct ScoresProvider {
    scores: BTreeMap<String, BTreeMap<String, ScoreSampleSet>>,
    seed: u64,
    dimension: Dimension,
}

impl ScoresProvider {
    pub fn load(path: &Path, seed: u64, dimension: Dimension) -> Result<Self> {
        if dimension == Dimension::Alignment {
            bail!("score files cover perceptual and aesthetic dimensions only");
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let raw: BTreeMap<String, BTreeMap<String, Vec<f64>>> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut scores = BTreeMap::new();
        for (model, prompts) in raw {
            let mut sets = BTreeMap::new();
            for (prompt, samples) in prompts {
                let set = ScoreSampleSet::new(samples).with_context(|| format!("{model}/{prompt}"))?;
                sets.insert(prompt, set);
            }
            scores.insert(model, sets);
        }
        Ok(Self {
            scores,
            seed,
            dimension,
        })
    }
}

impl OutcomeSource for ScoresProvider {
    fn evaluate(&mut self, req: &BatchRequest) -> Result<Vec<PairwiseOutcome>, SourceError> {
        let get = |m: &str| {
            self.scores
                .get(m)
                .ok_or_else(|| source_err(format!("no scores for model {m}")))
        };
        let (a, b) = (get(req.model_a)?, get(req.model_b)?);
        let mut rng = round_rng(self.seed, self.dimension, req.round);
        let mut out = Vec::new();
        for prompt in pick_prompts(a, b, req.batch_size, &mut rng) {
            let (sa, sb) = (&a[prompt], &b[prompt]);
            let verdict = match self.dimension {
                Dimension::Perceptual => perceptual_compare(sa, sb),
                _ => aesthetic_compare(sa.mean(), sb.mean(), AESTHETIC_TIE_THRESHOLD)?,
            };
            out.push(PairwiseOutcome::new(verdict, self.dimension, prompt.clone()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct JudgePrompt {
    pub text: String,
    #[serde(default)]
    pub checklist: Vec<String>,
}

pub struct JudgeProvider {
    backend: Box<dyn JudgeBackend + Send>,
    prompts: BTreeMap<String, JudgePrompt>,
    images: BTreeMap<String, BTreeMap<String, String>>,
    concurrency: usize,
    seed: u64,
}

impl JudgeProvider {
    pub fn new(
        backend: Box<dyn JudgeBackend + Send>,
        prompts: BTreeMap<String, JudgePrompt>,
        images: BTreeMap<String, BTreeMap<String, String>>,
        concurrency: usize,
        seed: u64,
    ) -> Self {
        Self {
            backend,
            prompts,
            images,
            concurrency: concurrency.max(1),
            seed,
        }
    }
}

impl OutcomeSource for JudgeProvider {
    fn evaluate(&mut self, req: &BatchRequest) -> Result<Vec<PairwiseOutcome>, SourceError> {
        let get = |m: &str| {
            self.images
                .get(m)
                .ok_or_else(|| source_err(format!("no images for model {m}")))
        };
        let (a, b) = (get(req.model_a)?, get(req.model_b)?);
        let mut rng = round_rng(self.seed, Dimension::Alignment, req.round);
        let picked: Vec<&String> = pick_prompts(a, b, req.batch_size, &mut rng)
            .into_iter()
            .filter(|p| self.prompts.contains_key(*p))
            .collect();
        let backend = self.backend.as_ref();
        let mut out = Vec::with_capacity(picked.len());
        // at most `concurrency` comparisons in flight
        for chunk in picked.chunks(self.concurrency) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|pid| {
                        let p = &self.prompts[*pid];
                        let (ia, ib) = (&a[*pid], &b[*pid]);
                        s.spawn(move || judge_client_compare(backend, pid, &p.text, &p.checklist, ia, ib))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().map_err(|_| source_err("judge worker panicked".into())))
                    .collect()
            });
            for r in results {
                out.push(r??);
            }
        }
        Ok(out)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Builds the configured source for one dimension.
pub fn build_provider(
    cfg: &ProviderConfig,
    models: &[ModelEntry],
    seed: u64,
    dimension: Dimension,
) -> Result<Box<dyn OutcomeSource + Send>> {
    Ok(match cfg {
        ProviderConfig::Mock { environment: name } => {
            let env = environment(name).ok_or_else(|| anyhow!("unknown environment {name:?}"))?;
            Box::new(MockProvider::new(env, models, seed, dimension))
        }
        ProviderConfig::Scores { path } => Box::new(ScoresProvider::load(path, seed, dimension)?),
        ProviderConfig::Judge {
            url,
            prompts,
            images,
            concurrency,
            timeout_secs,
        } => {
            if dimension != Dimension::Alignment {
                bail!("the judge provider serves the alignment dimension only");
            }
            let timeout = Duration::from_secs(*timeout_secs);
            let judge = match url {
                Some(u) => HttpJudge::new(u.clone(), timeout),
                None => HttpJudge::from_env(timeout)?,
            };
            Box::new(JudgeProvider::new(
                Box::new(judge),
                read_json(prompts)?,
                read_json(images)?,
                *concurrency,
                seed,
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use arena_core::evaluators::judge::{JudgeRequest, MockJudge};
    use arena_core::evaluators::Verdict;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn req<'a>(round: u64, a: &'a str, b: &'a str) -> BatchRequest<'a> {
        BatchRequest {
            round,
            model_a: a,
            model_b: b,
            batch_size: 15,
        }
    }

    #[test]
    fn mock_is_a_function_of_round() {
        let models = [
            ModelEntry { id: "x".into(), join_round: 0, skill: Some(900.0) },
            ModelEntry { id: "y".into(), join_round: 0, skill: Some(1100.0) },
        ];
        let env = environment("reference").unwrap();
        let mut p = MockProvider::new(env.clone(), &models, 3, Dimension::Alignment);
        let first = p.evaluate(&req(7, "x", "y")).unwrap();
        p.evaluate(&req(8, "x", "y")).unwrap();
        let mut q = MockProvider::new(env, &models, 3, Dimension::Alignment);
        assert_eq!(q.evaluate(&req(7, "x", "y")).unwrap(), first);
        assert!(p.evaluate(&req(1, "x", "nobody")).is_err());
    }

    #[test]
    fn scores_provider_compares_shared_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.json");
        std::fs::write(
            &path,
            r#"{"a": {"p1": [80.0], "p2": [50.0], "p3": [10.0]}, "b": {"p1": [70.0], "p2": [52.0]}}"#,
        )
        .unwrap();
        let mut p = ScoresProvider::load(&path, 1, Dimension::Aesthetic).unwrap();
        let mut out = p.evaluate(&req(1, "a", "b")).unwrap();
        out.sort_by(|x, y| x.prompt_id.cmp(&y.prompt_id));
        let got: Vec<_> = out.iter().map(|o| (o.prompt_id.as_str(), o.verdict)).collect();
        assert_eq!(got, [("p1", Verdict::A), ("p2", Verdict::Tie)]);
        assert!(ScoresProvider::load(&path, 1, Dimension::Alignment).is_err());
    }

    #[test]
    fn judge_concurrency_is_capped() {
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (f, pk) = (in_flight.clone(), peak.clone());
        let judge = MockJudge(move |r: &JudgeRequest| {
            let now = f.fetch_add(1, Ordering::SeqCst) + 1;
            pk.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            f.fetch_sub(1, Ordering::SeqCst);
            let w = if r.image_a.starts_with("good") { "A" } else { "B" };
            format!(r#"{{"analysis_A": "", "analysis_B": "", "winner": "{w}"}}"#)
        });
        let prompts: BTreeMap<_, _> = (0..20)
            .map(|i| (format!("p{i}"), JudgePrompt { text: "t".into(), checklist: vec![] }))
            .collect();
        let images: BTreeMap<_, _> = ["good", "bad"]
            .iter()
            .map(|m| (m.to_string(), prompts.keys().map(|p| (p.clone(), format!("{m}-{p}.png"))).collect()))
            .collect();
        let mut p = JudgeProvider::new(Box::new(judge), prompts, images, 3, 0);
        let out = p.evaluate(&req(1, "good", "bad")).unwrap();
        assert_eq!(out.len(), 15);
        assert!(out.iter().all(|o| o.verdict == Verdict::A));
        // two order-swapped calls per comparison
        assert!(peak.load(Ordering::SeqCst) <= 6);
    }
}
