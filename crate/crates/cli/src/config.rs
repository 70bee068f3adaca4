//! Run configuration. Every field has a default, so `{}` is a valid file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arena_core::evaluators::Dimension;
use arena_core::prompts::{SamplingPolicy, Task};
use arena_core::rating::RatingHyperParams;
use arena_core::scheduler::ConvergenceRule;
use arena_core::sim::SystemKind;
use arena_core::sim::TrialSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub hyper_params: RatingHyperParams,
    pub convergence: ConvergenceRule,
    pub simulate: SimulateConfig,
    pub arena: ArenaConfig,
    pub prompts: PromptsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20260101,
            out_dir: PathBuf::from("out"),
            hyper_params: RatingHyperParams::default(),
            convergence: ConvergenceRule::default(),
            simulate: SimulateConfig::default(),
            arena: ArenaConfig::default(),
            prompts: PromptsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub environments: Vec<String>,
    pub systems: Vec<SystemKind>,
    pub trial: TrialSpec,
}

impl SimulateConfig {
    /// Shortens or lengthens the dynamic phase. Injection rounds keep their
    /// relative position and checkpoints past the end are dropped, with the
    /// last round always kept as a checkpoint.
    pub fn set_rounds(&mut self, rounds: u64) {
        let t = &mut self.trial;
        let old = t.dynamic_rounds.max(1);
        for inj in &mut t.injections {
            if inj.round > rounds {
                inj.round = (inj.round as u128 * rounds as u128 / old as u128).max(2) as u64;
            }
        }
        t.dynamic_rounds = rounds;
        t.checkpoints.retain(|c| *c <= rounds);
        if !t.checkpoints.contains(&rounds) {
            t.checkpoints.push(rounds);
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            environments: vec!["reference".into()],
            systems: SystemKind::BENCHMARK.to_vec(),
            trial: TrialSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    /// Registered before the first round whose index exceeds this value.
    #[serde(default)]
    pub join_round: u64,
    /// Latent skill used by the mock provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Synthetic outcomes from a simulation environment.
    Mock {
        #[serde(default = "default_env")]
        environment: String,
    },
    /// Precomputed per-prompt scores: `{model: {prompt_id: [samples]}}`.
    Scores { path: PathBuf },
    /// Live pairwise judge over HTTP. The URL falls back to ARENA_JUDGE_URL.
    Judge {
        #[serde(default)]
        url: Option<String>,
        /// `{prompt_id: {"text": .., "checklist": [..]}}`
        prompts: PathBuf,
        /// `{model: {prompt_id: image_ref}}`
        images: PathBuf,
        #[serde(default = "default_concurrency")]
        concurrency: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_env() -> String {
    "reference".into()
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub dimensions: Vec<Dimension>,
    pub models: Vec<ModelEntry>,
    pub rounds: u64,
    /// Write a leaderboard snapshot every this many rounds; 0 disables.
    pub snapshot_every: u64,
    /// Providers per dimension; dimensions without an entry use the mock.
    pub providers: BTreeMap<Dimension, ProviderConfig>,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            dimensions: vec![Dimension::Alignment],
            models: (0..12)
                .map(|i| ModelEntry {
                    id: format!("model-{i:02}"),
                    join_round: 0,
                    skill: Some(1000.0 + 40.0 * (i as f64 - 5.5)),
                })
                .collect(),
            rounds: 250,
            snapshot_every: 50,
            providers: BTreeMap::new(),
        }
    }
}

impl ArenaConfig {
    pub fn provider(&self, dim: Dimension) -> ProviderConfig {
        self.providers.get(&dim).cloned().unwrap_or(ProviderConfig::Mock {
            environment: default_env(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewriterConfig {
    Template,
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    pub task: Task,
    pub count: u64,
    /// A JSON file mapping buckets to arrays, or a directory of
    /// `<bucket>.json` files. Built-in sample pools when absent.
    pub pools: Option<PathBuf>,
    pub policy: SamplingPolicy,
    pub rewriter: RewriterConfig,
    pub max_attempts: u32,
    pub output: String,
    pub pollution_phrases: Option<Vec<String>>,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        Self {
            task: Task::Alignment,
            count: 100,
            pools: None,
            policy: SamplingPolicy::default(),
            rewriter: RewriterConfig::Template,
            max_attempts: 3,
            output: "prompts.jsonl".into(),
            pollution_phrases: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper_params.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.arena.models {
            if !seen.insert(&m.id) {
                bail!("model {} listed twice", m.id);
            }
        }
        if self.prompts.max_attempts == 0 {
            bail!("prompts.max_attempts must be positive");
        }
        self.prompts.policy.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
