use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::PromptRecord;
use super::PromptError;

/// Phrases that betray a rewriter echoing its instructions.
pub fn default_pollution_phrases() -> Vec<String> {
    [
        "here is",
        "rewritten prompt",
        "as an ai",
        "sure!",
        "prompt:",
        "checklist:",
        "{subject}",
        "i cannot",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub pollution_phrases: Vec<String>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            pollution_phrases: default_pollution_phrases(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub ratio: f64,
}

/// Label counts with their share of the total.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution(pub BTreeMap<String, Share>);

impl Distribution {
    fn from_counts(counts: BTreeMap<String, usize>) -> Self {
        let total: usize = counts.values().sum();
        Distribution(
            counts
                .into_iter()
                .map(|(k, count)| {
                    let ratio = if total == 0 { 0.0 } else { count as f64 / total as f64 };
                    (k, Share { count, ratio })
                })
                .collect(),
        )
    }

    pub fn ratio(&self, label: &str) -> f64 {
        self.0.get(label).map_or(0.0, |s| s.ratio)
    }

    pub fn count(&self, label: &str) -> usize {
        self.0.get(label).map_or(0, |s| s.count)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Non-blank lines.
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    pub non_empty_rate: f64,
    pub malformed_rate: f64,
    pub mean_words: f64,
    pub mean_chars: f64,
    pub difficulty: Distribution,
    pub logic: Distribution,
    pub support: Distribution,
    pub checklist: Distribution,
    pub mean_checklist: f64,
    pub pollution_hits: BTreeMap<String, usize>,
    pub polluted_records: usize,
}

pub fn analyze_outputs(path: &Path, options: &AnalysisOptions) -> Result<AnalysisReport, PromptError> {
    let file = File::open(path).map_err(|e| PromptError::io(path, e))?;
    analyze_reader(BufReader::new(file), options).map_err(|e| PromptError::io(path, e))
}

pub fn analyze_reader(reader: impl BufRead, options: &AnalysisOptions) -> std::io::Result<AnalysisReport> {
    let mut r = AnalysisReport::default();
    let (mut difficulty, mut logic, mut support, mut checklist) =
        (BTreeMap::new(), BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    let (mut non_empty, mut words, mut chars, mut checklist_sum, mut checklist_n) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let phrases: Vec<String> = options.pollution_phrases.iter().map(|p| p.to_lowercase()).collect();

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        r.lines += 1;
        let Ok(rec) = serde_json::from_str::<PromptRecord>(&line) else {
            r.malformed += 1;
            continue;
        };
        r.records += 1;
        let text = rec.prompt.trim();
        if !text.is_empty() {
            non_empty += 1;
            words += text.split_whitespace().count();
            chars += text.chars().count();
        }
        let lower = text.to_lowercase();
        let mut polluted = false;
        for p in &phrases {
            if lower.contains(p.as_str()) {
                *r.pollution_hits.entry(p.clone()).or_insert(0) += 1;
                polluted = true;
            }
        }
        r.polluted_records += polluted as usize;
        if let Some(d) = rec.config.difficulty {
            *difficulty.entry(d.to_string()).or_insert(0) += 1;
        }
        if let Some(l) = rec.logic_pool.or(rec.config.logic.as_ref().map(|t| t.bucket)) {
            *logic.entry(l.to_string()).or_insert(0) += 1;
        }
        for s in &rec.config.supports {
            *support.entry(s.bucket.to_string()).or_insert(0) += 1;
        }
        if let Some(n) = rec.checklist_len() {
            *checklist.entry(n.to_string()).or_insert(0) += 1;
            checklist_sum += n;
            checklist_n += 1;
        }
    }

    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    r.non_empty_rate = frac(non_empty, r.lines);
    r.malformed_rate = frac(r.malformed, r.lines);
    r.mean_words = frac(words, non_empty);
    r.mean_chars = frac(chars, non_empty);
    r.mean_checklist = frac(checklist_sum, checklist_n);
    r.difficulty = Distribution::from_counts(difficulty);
    r.logic = Distribution::from_counts(logic);
    r.support = Distribution::from_counts(support);
    r.checklist = Distribution::from_counts(checklist);
    Ok(r)
}
