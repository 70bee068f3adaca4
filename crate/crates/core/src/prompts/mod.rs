//! Structured prompt-configuration sampling for the alignment and quality
//! prompt spaces, exact space counting, JSONL persistence and analysis.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod analysis;
mod rewrite;
mod store;

pub use analysis::{
    analyze_outputs, analyze_reader, default_pollution_phrases, AnalysisOptions, AnalysisReport, Distribution, Share,
};
pub use rewrite::{
    generate_with_retry, output_problem, render_template, template_checklist, HttpRewriter, RewriteError,
    RewriteOutput, Rewriter, TemplateRewriter,
};
pub use store::{append_config, append_record, read_records, resume_scan, PromptRecord, PromptWriter, TextSource};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("required pool {0} is empty")]
    EmptyPool(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is locked by another writer")]
    Locked(String),
    #[error("malformed pools: {0}")]
    MalformedPools(String),
    #[error("could not produce an acceptable prompt after {0} attempts")]
    RetriesExhausted(u32),
}

impl PromptError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PromptError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Alignment,
    Quality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    HardLongText,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::HardLongText];

    /// Logic buckets a prompt of this difficulty may draw from.
    pub fn logic_buckets(self) -> &'static [LogicBucket] {
        use LogicBucket::*;
        match self {
            Difficulty::Easy => &[AttributeBinding, StateAction],
            Difficulty::Medium => &[AttributeBinding, StateAction, Counting, ShortText],
            Difficulty::Hard => &[Spatial, Counting, ShortText],
            Difficulty::HardLongText => &[LongText],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::HardLongText => "hard_long_text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicBucket {
    AttributeBinding,
    Counting,
    Spatial,
    StateAction,
    ShortText,
    LongText,
}

impl LogicBucket {
    pub const ALL: [LogicBucket; 6] = [
        LogicBucket::AttributeBinding,
        LogicBucket::Counting,
        LogicBucket::Spatial,
        LogicBucket::StateAction,
        LogicBucket::ShortText,
        LogicBucket::LongText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LogicBucket::AttributeBinding => "attribute_binding",
            LogicBucket::Counting => "counting",
            LogicBucket::Spatial => "spatial",
            LogicBucket::StateAction => "state_action",
            LogicBucket::ShortText => "short_text",
            LogicBucket::LongText => "long_text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportBucket {
    Environment,
    LightingAtmosphere,
    CameraComposition,
    MediumFormat,
}

impl SupportBucket {
    pub const ALL: [SupportBucket; 4] = [
        SupportBucket::Environment,
        SupportBucket::LightingAtmosphere,
        SupportBucket::CameraComposition,
        SupportBucket::MediumFormat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SupportBucket::Environment => "environment",
            SupportBucket::LightingAtmosphere => "lighting_atmosphere",
            SupportBucket::CameraComposition => "camera_composition",
            SupportBucket::MediumFormat => "medium_format",
        }
    }
}

macro_rules! display_as_str {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    )*};
}
display_as_str!(Difficulty, LogicBucket, SupportBucket);

/// Candidate tags per bucket.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidatePools {
    pub strong_subjects: Vec<String>,
    pub logic: BTreeMap<LogicBucket, Vec<String>>,
    pub supports: BTreeMap<SupportBucket, Vec<String>>,
    /// Kept for provenance; never sampled.
    pub weak_subjects: Vec<String>,
    pub dependent_fragments: Vec<String>,
}

const SAMPLE_POOLS: &str = include_str!("../../resources/sample_pools.json");

impl CandidatePools {
    /// Small built-in pools for offline use and demos.
    pub fn sample() -> Self {
        Self::from_json(SAMPLE_POOLS).expect("shipped sample pools are valid")
    }

    /// Parses one JSON object mapping bucket names to arrays.
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| PromptError::MalformedPools(e.to_string()))?;
        let mut pools = CandidatePools::default();
        for (name, items) in raw {
            pools.insert(&name, items)?;
        }
        Ok(pools)
    }

    /// Reads `<bucket>.json` files, each holding one array, from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut pools = CandidatePools::default();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::io(dir, e))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::io(&path, e))?;
            let items: Vec<String> = serde_json::from_str(&text)
                .map_err(|e| PromptError::MalformedPools(format!("{}: {e}", path.display())))?;
            pools.insert(&name, items)?;
        }
        Ok(pools)
    }

    fn insert(&mut self, name: &str, items: Vec<String>) -> Result<(), PromptError> {
        if let Some(b) = LogicBucket::ALL.iter().find(|b| b.as_str() == name) {
            self.logic.insert(*b, items);
        } else if let Some(b) = SupportBucket::ALL.iter().find(|b| b.as_str() == name) {
            self.supports.insert(*b, items);
        } else {
            match name {
                "strong_subjects" => self.strong_subjects = items,
                "weak_subjects" => self.weak_subjects = items,
                "dependent_fragments" => self.dependent_fragments = items,
                other => return Err(PromptError::MalformedPools(format!("unknown bucket {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn logic_pool(&self, bucket: LogicBucket) -> &[String] {
        self.logic.get(&bucket).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn support_pool(&self, bucket: SupportBucket) -> &[String] {
        self.supports.get(&bucket).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Sampling knobs. Weights are relative and need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingPolicy {
    pub difficulty_weights: BTreeMap<Difficulty, f64>,
    /// Relative weight of each logic bucket inside a difficulty; missing = 1.
    pub logic_weights: BTreeMap<LogicBucket, f64>,
    pub alignment_support_weights: BTreeMap<SupportBucket, f64>,
    pub quality_support_weights: BTreeMap<SupportBucket, f64>,
    pub quality_logic_probability: f64,
    pub quality_logic_buckets: Vec<LogicBucket>,
    /// Weights of 4, 5 and 6 checklist slots.
    pub checklist_weights: [f64; 3],
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            difficulty_weights: Difficulty::ALL.iter().map(|d| (*d, 0.25)).collect(),
            logic_weights: BTreeMap::new(),
            alignment_support_weights: SupportBucket::ALL.iter().map(|s| (*s, 1.0)).collect(),
            quality_support_weights: [
                (SupportBucket::Environment, 1.0),
                (SupportBucket::LightingAtmosphere, 1.0),
                (SupportBucket::CameraComposition, 1.0),
                (SupportBucket::MediumFormat, 0.1),
            ]
            .into_iter()
            .collect(),
            quality_logic_probability: 0.1,
            quality_logic_buckets: vec![LogicBucket::AttributeBinding, LogicBucket::StateAction],
            checklist_weights: [0.41, 0.56, 0.03],
        }
    }
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<(), PromptError> {
        let weights = self
            .difficulty_weights
            .values()
            .chain(self.logic_weights.values())
            .chain(self.alignment_support_weights.values())
            .chain(self.quality_support_weights.values())
            .chain(self.checklist_weights.iter());
        for w in weights {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(PromptError::InvalidPolicy("weights must be finite and >= 0".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.quality_logic_probability) {
            return Err(PromptError::InvalidPolicy("quality_logic_probability outside [0, 1]".into()));
        }
        if self.checklist_weights.iter().sum::<f64>() <= 0.0 {
            return Err(PromptError::InvalidPolicy("checklist weights sum to zero".into()));
        }
        Ok(())
    }

    /// Alignment restricted to one difficulty.
    pub fn only(difficulty: Difficulty) -> Self {
        Self {
            difficulty_weights: [(difficulty, 1.0)].into_iter().collect(),
            ..Self::default()
        }
    }

    /// A narrower policy used when retrying after a rejected output: each
    /// level removes one source of semantic load.
    pub fn contracted(&self, level: u32) -> Self {
        let mut p = self.clone();
        if level >= 1 {
            p.quality_logic_probability = 0.0;
        }
        if level >= 2 {
            p.quality_support_weights.insert(SupportBucket::MediumFormat, 0.0);
            p.alignment_support_weights.insert(SupportBucket::MediumFormat, 0.0);
        }
        if level >= 3 {
            p.difficulty_weights.remove(&Difficulty::HardLongText);
        }
        p
    }

    fn logic_weight(&self, b: LogicBucket) -> f64 {
        self.logic_weights.get(&b).copied().unwrap_or(1.0)
    }
}

/// One sampled tag with the bucket it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag<B> {
    pub bucket: B,
    pub text: String,
}

/// Category of one checklist slot, derived from the sampled structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bucket")]
pub enum SlotCategory {
    Subject,
    Logic(LogicBucket),
    Support(SupportBucket),
    /// Extra verification of the logic constraint's details.
    LogicDetail(LogicBucket),
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub id: u64,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic: Option<Tag<LogicBucket>>,
    pub supports: Vec<Tag<SupportBucket>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checklist_slots: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten_text: Option<String>,
}

impl PromptConfig {
    /// Checks the composition rules of the config's task.
    pub fn is_valid(&self) -> bool {
        match self.task {
            Task::Alignment => {
                let (Some(d), Some(logic), Some(slots)) = (self.difficulty, &self.logic, self.checklist_slots) else {
                    return false;
                };
                self.supports.len() == 1
                    && d.logic_buckets().contains(&logic.bucket)
                    && (4..=6).contains(&slots)
            }
            Task::Quality => {
                self.difficulty.is_none()
                    && self.checklist_slots.is_none()
                    && self.supports.len() == 2
                    && self.supports[0].bucket != self.supports[1].bucket
            }
        }
    }

    /// Per-slot categories of the checklist scaffold.
    pub fn slot_categories(&self) -> Vec<SlotCategory> {
        let Some(n) = self.checklist_slots else {
            return Vec::new();
        };
        let mut slots = vec![SlotCategory::Subject];
        if let Some(l) = &self.logic {
            slots.push(SlotCategory::Logic(l.bucket));
        }
        slots.extend(self.supports.iter().map(|s| SlotCategory::Support(s.bucket)));
        while slots.len() < n as usize {
            slots.push(match &self.logic {
                Some(l) if slots.len() % 2 == 1 => SlotCategory::LogicDetail(l.bucket),
                _ => SlotCategory::Global,
            });
        }
        slots.truncate(n as usize);
        slots
    }
}

fn weighted_index(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return Some(i);
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0)
}

fn pick<'a>(pool: &'a [String], name: &str, rng: &mut impl Rng) -> Result<&'a String, PromptError> {
    if pool.is_empty() {
        return Err(PromptError::EmptyPool(name.to_string()));
    }
    Ok(&pool[rng.gen_range(0..pool.len())])
}

/// Draws one config with the given id.
pub fn sample_config(
    task: Task,
    pools: &CandidatePools,
    policy: &SamplingPolicy,
    id: u64,
    rng: &mut impl Rng,
) -> Result<PromptConfig, PromptError> {
    match task {
        Task::Alignment => sample_alignment(pools, policy, id, rng),
        Task::Quality => sample_quality(pools, policy, id, rng),
    }
}

// Only buckets with candidates can be drawn.
fn usable<B: Copy>(buckets: &[B], weight: impl Fn(B) -> f64, len: impl Fn(B) -> usize) -> (Vec<B>, Vec<f64>) {
    let kept: Vec<B> = buckets.iter().copied().filter(|&b| len(b) > 0 && weight(b) > 0.0).collect();
    let weights = kept.iter().map(|&b| weight(b)).collect();
    (kept, weights)
}

fn sample_alignment(
    pools: &CandidatePools,
    policy: &SamplingPolicy,
    id: u64,
    rng: &mut impl Rng,
) -> Result<PromptConfig, PromptError> {
    let difficulties: Vec<Difficulty> = Difficulty::ALL.into_iter().collect();
    let dw: Vec<f64> = difficulties
        .iter()
        .map(|d| policy.difficulty_weights.get(d).copied().unwrap_or(0.0))
        .collect();
    let difficulty = difficulties[weighted_index(&dw, rng)
        .ok_or_else(|| PromptError::InvalidPolicy("no difficulty has positive weight".into()))?];

    let (logic_buckets, lw) = usable(
        difficulty.logic_buckets(),
        |b| policy.logic_weight(b),
        |b| pools.logic_pool(b).len(),
    );
    let logic_bucket = *weighted_index(&lw, rng)
        .map(|i| &logic_buckets[i])
        .ok_or_else(|| PromptError::EmptyPool(format!("logic buckets for {difficulty}")))?;
    let subject = pick(&pools.strong_subjects, "strong_subjects", rng)?.clone();
    let logic = pick(pools.logic_pool(logic_bucket), logic_bucket.as_str(), rng)?.clone();

    let (support_buckets, sw) = usable(
        &SupportBucket::ALL,
        |b| policy.alignment_support_weights.get(&b).copied().unwrap_or(0.0),
        |b| pools.support_pool(b).len(),
    );
    let support_bucket = *weighted_index(&sw, rng)
        .map(|i| &support_buckets[i])
        .ok_or_else(|| PromptError::EmptyPool("support buckets".into()))?;
    let support = pick(pools.support_pool(support_bucket), support_bucket.as_str(), rng)?.clone();

    let slots = 4 + weighted_index(&policy.checklist_weights, rng)
        .ok_or_else(|| PromptError::InvalidPolicy("checklist weights sum to zero".into()))? as u8;

    Ok(PromptConfig {
        id,
        task: Task::Alignment,
        difficulty: Some(difficulty),
        subject,
        logic: Some(Tag {
            bucket: logic_bucket,
            text: logic,
        }),
        supports: vec![Tag {
            bucket: support_bucket,
            text: support,
        }],
        checklist_slots: Some(slots),
        rewritten_text: None,
    })
}

fn sample_quality(
    pools: &CandidatePools,
    policy: &SamplingPolicy,
    id: u64,
    rng: &mut impl Rng,
) -> Result<PromptConfig, PromptError> {
    let subject = pick(&pools.strong_subjects, "strong_subjects", rng)?.clone();
    let (mut buckets, mut weights) = usable(
        &SupportBucket::ALL,
        |b| policy.quality_support_weights.get(&b).copied().unwrap_or(0.0),
        |b| pools.support_pool(b).len(),
    );
    let mut supports = Vec::with_capacity(2);
    for _ in 0..2 {
        let i = weighted_index(&weights, rng)
            .ok_or_else(|| PromptError::EmptyPool("two distinct support buckets".into()))?;
        let bucket = buckets.remove(i);
        weights.remove(i);
        supports.push(Tag {
            bucket,
            text: pick(pools.support_pool(bucket), bucket.as_str(), rng)?.clone(),
        });
    }
    supports.sort_by_key(|t| t.bucket);

    let logic = if rng.gen::<f64>() < policy.quality_logic_probability {
        let (lb, lw) = usable(&policy.quality_logic_buckets, |_| 1.0, |b| pools.logic_pool(b).len());
        match weighted_index(&lw, rng) {
            Some(i) => Some(Tag {
                bucket: lb[i],
                text: pick(pools.logic_pool(lb[i]), lb[i].as_str(), rng)?.clone(),
            }),
            None => None,
        }
    } else {
        None
    };

    Ok(PromptConfig {
        id,
        task: Task::Quality,
        difficulty: None,
        subject,
        logic,
        supports,
        checklist_slots: None,
        rewritten_text: None,
    })
}

/// Which part of the space to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceMode {
    /// Alignment tuples summed over every difficulty with positive weight.
    Alignment,
    AlignmentAt(Difficulty),
    /// Quality tuples without the optional soft logic.
    Quality,
    /// Quality tuples with the optional soft logic expanded.
    QualityWithLogic,
}

/// Exact number of distinct rule-valid configurations. A configuration is
/// `(difficulty, subject, logic, supports)`; ids, slot counts and weights do
/// not create new configurations, but zero-weight buckets are excluded.
pub fn count_space(mode: SpaceMode, pools: &CandidatePools, policy: &SamplingPolicy) -> u128 {
    let n = |len: usize| len as u128;
    let subjects = n(pools.strong_subjects.len());
    let alignment_at = |d: Difficulty| -> u128 {
        let logic: u128 = d
            .logic_buckets()
            .iter()
            .filter(|b| policy.logic_weight(**b) > 0.0)
            .map(|b| n(pools.logic_pool(*b).len()))
            .sum();
        let support: u128 = SupportBucket::ALL
            .iter()
            .filter(|b| policy.alignment_support_weights.get(b).copied().unwrap_or(0.0) > 0.0)
            .map(|b| n(pools.support_pool(*b).len()))
            .sum();
        subjects.checked_mul(logic).and_then(|x| x.checked_mul(support)).expect("space fits in u128")
    };
    let quality = |with_logic: bool| -> u128 {
        let sizes: Vec<u128> = SupportBucket::ALL
            .iter()
            .filter(|b| policy.quality_support_weights.get(b).copied().unwrap_or(0.0) > 0.0)
            .map(|b| n(pools.support_pool(*b).len()))
            .collect();
        let mut pairs = 0u128;
        for i in 0..sizes.len() {
            for j in i + 1..sizes.len() {
                pairs += sizes[i] * sizes[j];
            }
        }
        let logic_choices = if with_logic && policy.quality_logic_probability > 0.0 {
            1 + policy
                .quality_logic_buckets
                .iter()
                .map(|b| n(pools.logic_pool(*b).len()))
                .sum::<u128>()
        } else {
            1
        };
        subjects
            .checked_mul(pairs)
            .and_then(|x| x.checked_mul(logic_choices))
            .expect("space fits in u128")
    };
    match mode {
        SpaceMode::AlignmentAt(d) => alignment_at(d),
        SpaceMode::Alignment => Difficulty::ALL
            .iter()
            .filter(|d| policy.difficulty_weights.get(d).copied().unwrap_or(0.0) > 0.0)
            .map(|d| alignment_at(*d))
            .sum(),
        SpaceMode::Quality => quality(false),
        SpaceMode::QualityWithLogic => quality(true),
    }
}
