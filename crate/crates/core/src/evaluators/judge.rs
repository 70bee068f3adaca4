//! Pairwise alignment judge: prompt template, transport and order-swapped
//! aggregation. The judge model itself lives behind an HTTP endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{order_swap_aggregate, Dimension, EvalError, PairwiseOutcome, Verdict};

/// Judge instruction template, version 1.
pub const TEMPLATE_V1: &str = include_str!("../../resources/judge_template_v1.txt");
pub const TEMPLATE_VERSION: &str = "v1";

/// Environment variable holding the judge endpoint URL.
pub const JUDGE_URL_ENV: &str = "ARENA_JUDGE_URL";

pub fn render_checklist(checklist: &[String]) -> String {
    checklist
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}", i + 1, item))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_instruction(prompt: &str, checklist: &[String]) -> String {
    TEMPLATE_V1
        .replace("{prompt_text}", prompt)
        .replace("{checklist_str}", &render_checklist(checklist))
}

/// Wire request: one comparison in a fixed presentation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub prompt: String,
    pub checklist: Vec<String>,
    pub image_a: String,
    pub image_b: String,
    pub instruction: String,
    pub template_version: String,
}

/// Wire reply, exactly the three fields the template asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeReply {
    #[serde(rename = "analysis_A")]
    pub analysis_a: String,
    #[serde(rename = "analysis_B")]
    pub analysis_b: String,
    pub winner: String,
}

impl JudgeReply {
    pub fn parse(body: &str) -> Result<Self, EvalError> {
        let reply: JudgeReply = serde_json::from_str(body.trim())
            .map_err(|e| EvalError::Protocol(format!("malformed judge reply: {e}")))?;
        reply.verdict()?;
        Ok(reply)
    }

    /// Winner in the presentation order of the request.
    pub fn verdict(&self) -> Result<Verdict, EvalError> {
        Verdict::parse(&self.winner)
            .ok_or_else(|| EvalError::Protocol(format!("winner {:?} outside {{A, B, Tie}}", self.winner)))
    }
}

/// Anything that can answer a single judge request.
pub trait JudgeBackend: Sync {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeReply, EvalError>;
}

/// HTTP judge: POSTs the request as JSON and expects the strict JSON reply
/// as the response body.
pub struct HttpJudge {
    agent: ureq::Agent,
    url: String,
}

impl HttpJudge {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
        }
    }

    /// Reads the endpoint from [`JUDGE_URL_ENV`].
    pub fn from_env(timeout: Duration) -> Result<Self, EvalError> {
        let url = std::env::var(JUDGE_URL_ENV)
            .map_err(|_| EvalError::Transport(format!("{JUDGE_URL_ENV} is not set")))?;
        Ok(Self::new(url, timeout))
    }
}

impl JudgeBackend for HttpJudge {
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeReply, EvalError> {
        let body = serde_json::to_string(request)
            .map_err(|e| EvalError::InvalidInput(e.to_string()))?;
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| EvalError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| EvalError::Transport(e.to_string()))?;
        JudgeReply::parse(&text)
    }
}

/// Deterministic stand-in judge. The closure sees the request in
/// presentation order and returns the raw reply body.
pub struct MockJudge<F>(pub F);

impl<F> JudgeBackend for MockJudge<F>
where
    F: Fn(&JudgeRequest) -> String + Sync,
{
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeReply, EvalError> {
        JudgeReply::parse(&(self.0)(request))
    }
}

/// Judges the pair twice with swapped presentation order and reconciles the
/// two canonical verdicts. The two calls run concurrently.
pub fn judge_client_compare(
    backend: &dyn JudgeBackend,
    prompt_id: &str,
    prompt: &str,
    checklist: &[String],
    image_ref_a: &str,
    image_ref_b: &str,
) -> Result<PairwiseOutcome, EvalError> {
    let instruction = render_instruction(prompt, checklist);
    let request = |first: &str, second: &str| JudgeRequest {
        prompt: prompt.to_string(),
        checklist: checklist.to_vec(),
        image_a: first.to_string(),
        image_b: second.to_string(),
        instruction: instruction.clone(),
        template_version: TEMPLATE_VERSION.to_string(),
    };
    let forward = request(image_ref_a, image_ref_b);
    let swapped = request(image_ref_b, image_ref_a);

    let (first, second) = std::thread::scope(|s| {
        let handle = s.spawn(|| backend.judge(&swapped));
        let first = backend.judge(&forward);
        let second = handle
            .join()
            .unwrap_or_else(|_| Err(EvalError::Transport("judge worker panicked".into())));
        (first, second)
    });
    let (first, second) = (first?, second?);

    let v1 = first.verdict()?;
    let v2 = second.verdict()?.mirrored();
    let verdict = order_swap_aggregate(v1, v2);
    Ok(
        PairwiseOutcome::new(verdict, Dimension::Alignment, prompt_id).with_detail(serde_json::json!({
            "forward": first.winner,
            "swapped": second.winner,
            "analysis_forward": [first.analysis_a, first.analysis_b],
            "analysis_swapped": [second.analysis_a, second.analysis_b],
        })),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(winner: &str) -> String {
        format!(r#"{{"analysis_A": "a", "analysis_B": "b", "winner": "{winner}"}}"#)
    }

    // Prefers whichever image reference is "good.png", wherever it is shown.
    fn consistent(req: &JudgeRequest) -> String {
        if req.image_a == "good.png" {
            reply("A")
        } else {
            reply("B")
        }
    }

    #[test]
    fn template_is_rendered() {
        let text = render_instruction("a red cube", &["cube is red".into(), "one cube".into()]);
        assert!(text.starts_with("You are an impartial judge for text-image alignment."));
        assert!(text.contains("[Text Prompt]\na red cube\n"));
        assert!(text.contains("[Checklist]\n1. cube is red\n2. one cube\n"));
        assert!(!text.contains("{prompt_text}"));
    }

    #[test]
    fn consistent_judge_wins() {
        let judge = MockJudge(consistent);
        let out = judge_client_compare(&judge, "p1", "x", &[], "good.png", "bad.png").unwrap();
        assert_eq!(out.verdict, Verdict::A);
        let out = judge_client_compare(&judge, "p1", "x", &[], "bad.png", "good.png").unwrap();
        assert_eq!(out.verdict, Verdict::B);
    }

    #[test]
    fn position_biased_judge_ties() {
        // always says "A": canonical (A, B) after un-swapping
        let judge = MockJudge(|_: &JudgeRequest| reply("A"));
        let out = judge_client_compare(&judge, "p1", "x", &[], "1.png", "2.png").unwrap();
        assert_eq!(out.verdict, Verdict::Tie);
    }

    #[test]
    fn protocol_errors() {
        let judge = MockJudge(|_: &JudgeRequest| "not json".to_string());
        let err = judge_client_compare(&judge, "p", "x", &[], "1", "2").unwrap_err();
        assert!(matches!(err, EvalError::Protocol(_)));

        let judge = MockJudge(|_: &JudgeRequest| reply("C"));
        assert!(matches!(
            judge_client_compare(&judge, "p", "x", &[], "1", "2").unwrap_err(),
            EvalError::Protocol(_)
        ));

        let judge = MockJudge(|_: &JudgeRequest| r#"{"winner": "A"}"#.to_string());
        assert!(matches!(
            judge_client_compare(&judge, "p", "x", &[], "1", "2").unwrap_err(),
            EvalError::Protocol(_)
        ));
    }
}
