use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{PromptRecord, TextSource};
use super::{sample_config, CandidatePools, PromptConfig, PromptError, SamplingPolicy, SlotCategory, Task};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteOutput {
    pub prompt: String,
    #[serde(default)]
    pub checklist: Vec<String>,
}

/// Turns structured tags into prompt text and checklist items.
pub trait Rewriter {
    fn rewrite(&self, config: &PromptConfig) -> Result<RewriteOutput, RewriteError>;

    fn source(&self) -> TextSource {
        TextSource::Rewriter
    }
}

/// Joins the tags into a sentence. Used when no rewriting endpoint is set.
pub fn render_template(config: &PromptConfig) -> String {
    let mut parts = vec![config.subject.clone()];
    if let Some(l) = &config.logic {
        parts.push(l.text.clone());
    }
    parts.extend(config.supports.iter().map(|s| s.text.clone()));
    parts.join(", ")
}

pub fn template_checklist(config: &PromptConfig) -> Vec<String> {
    let logic = config.logic.as_ref().map(|l| l.text.as_str()).unwrap_or("");
    config
        .slot_categories()
        .into_iter()
        .map(|slot| match slot {
            SlotCategory::Subject => format!("The image shows {}.", config.subject),
            SlotCategory::Logic(_) => format!("The constraint \"{logic}\" is satisfied."),
            SlotCategory::LogicDetail(b) => format!("Every detail of the {b} constraint is rendered correctly."),
            SlotCategory::Support(b) => {
                let text = config.supports.iter().find(|s| s.bucket == b).map(|s| s.text.as_str()).unwrap_or("");
                format!("The {b} matches \"{text}\".")
            }
            SlotCategory::Global => "No content contradicts the prompt.".to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateRewriter;

impl Rewriter for TemplateRewriter {
    fn rewrite(&self, config: &PromptConfig) -> Result<RewriteOutput, RewriteError> {
        Ok(RewriteOutput {
            prompt: render_template(config),
            checklist: template_checklist(config),
        })
    }

    fn source(&self) -> TextSource {
        TextSource::Template
    }
}

#[derive(Serialize)]
struct RewriteRequest<'a> {
    config: &'a PromptConfig,
    checklist_scaffold: Vec<SlotCategory>,
}

/// POSTs the config as JSON and expects `{"prompt": .., "checklist": [..]}`.
pub struct HttpRewriter {
    agent: ureq::Agent,
    url: String,
}

impl HttpRewriter {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, url: url.into() }
    }
}

impl Rewriter for HttpRewriter {
    fn rewrite(&self, config: &PromptConfig) -> Result<RewriteOutput, RewriteError> {
        let body = serde_json::to_string(&RewriteRequest {
            config,
            checklist_scaffold: config.slot_categories(),
        })
        .map_err(|e| RewriteError::Protocol(e.to_string()))?;
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| RewriteError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| RewriteError::Transport(e.to_string()))?;
        serde_json::from_str(text.trim()).map_err(|e| RewriteError::Protocol(format!("malformed reply: {e}")))
    }
}

/// Why an output was rejected, if it was.
pub fn output_problem(config: &PromptConfig, out: &RewriteOutput, pollution: &[String]) -> Option<String> {
    let text = out.prompt.trim();
    if text.is_empty() {
        return Some("empty prompt".into());
    }
    let lower = text.to_lowercase();
    if let Some(p) = pollution.iter().find(|p| lower.contains(&p.to_lowercase())) {
        return Some(format!("template pollution {p:?}"));
    }
    if let Some(n) = config.checklist_slots {
        if out.checklist.len() != n as usize {
            return Some(format!("checklist has {} items, expected {n}", out.checklist.len()));
        }
    }
    None
}

/// Samples and rewrites until the output passes the checks. Each failed
/// attempt resamples from a more contracted policy.
#[allow(clippy::too_many_arguments)]
pub fn generate_with_retry(
    task: Task,
    pools: &CandidatePools,
    policy: &SamplingPolicy,
    rewriter: &dyn Rewriter,
    id: u64,
    max_attempts: u32,
    pollution: &[String],
    rng: &mut impl Rng,
) -> Result<PromptRecord, PromptError> {
    for attempt in 0..max_attempts {
        let mut config = sample_config(task, pools, &policy.contracted(attempt), id, rng)?;
        let out = match rewriter.rewrite(&config) {
            Ok(out) => out,
            Err(e) => {
                log::warn!("prompt {id} attempt {}: {e}", attempt + 1);
                continue;
            }
        };
        if let Some(problem) = output_problem(&config, &out, pollution) {
            log::warn!("prompt {id} attempt {}: {problem}", attempt + 1);
            continue;
        }
        let source = rewriter.source();
        if source == TextSource::Rewriter {
            config.rewritten_text = Some(out.prompt.clone());
        }
        return Ok(PromptRecord::with_text(config, out.prompt, source, out.checklist));
    }
    Err(PromptError::RetriesExhausted(max_attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::default_pollution_phrases;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    struct Flaky {
        calls: Cell<u32>,
        bad: u32,
    }

    impl Rewriter for Flaky {
        fn rewrite(&self, config: &PromptConfig) -> Result<RewriteOutput, RewriteError> {
            let k = self.calls.get();
            self.calls.set(k + 1);
            if k < self.bad {
                return Ok(RewriteOutput {
                    prompt: "Sure! Here is the rewritten prompt:".into(),
                    checklist: vec![],
                });
            }
            let mut out = TemplateRewriter.rewrite(config)?;
            out.prompt = format!("A photo of {}", out.prompt);
            Ok(out)
        }
    }

    #[test]
    fn retries_then_accepts() {
        let pools = CandidatePools::sample();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let flaky = Flaky { calls: Cell::new(0), bad: 2 };
        let phrases = default_pollution_phrases();
        let r = generate_with_retry(Task::Alignment, &pools, &SamplingPolicy::default(), &flaky, 9, 5, &phrases, &mut rng)
            .unwrap();
        assert_eq!(flaky.calls.get(), 3);
        assert_eq!(r.prompt_source, TextSource::Rewriter);
        assert_eq!(r.config.rewritten_text.as_deref(), Some(r.prompt.as_str()));
        assert_eq!(r.config.id, 9);

        let always_bad = Flaky { calls: Cell::new(0), bad: 100 };
        assert!(matches!(
            generate_with_retry(Task::Quality, &pools, &SamplingPolicy::default(), &always_bad, 0, 3, &phrases, &mut rng),
            Err(PromptError::RetriesExhausted(3))
        ));
    }

    #[test]
    fn template_output_is_labeled_and_complete() {
        let pools = CandidatePools::sample();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for id in 0..100 {
            let r = generate_with_retry(
                Task::Alignment,
                &pools,
                &SamplingPolicy::default(),
                &TemplateRewriter,
                id,
                1,
                &default_pollution_phrases(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(r.prompt_source, TextSource::Template);
            assert!(r.config.rewritten_text.is_none());
            assert_eq!(r.checklist.len(), r.config.checklist_slots.unwrap() as usize);
        }
    }
}
