//! Adapters that turn heterogeneous evaluator signals into one
//! prompt-conditioned ternary outcome.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::MicroBatchResult;

mod comparators;
pub mod judge;

pub use comparators::{
    aesthetic_compare, order_swap_aggregate, perceptual_compare, perceptual_win_probability,
    ScoreSampleSet, AESTHETIC_TIE_THRESHOLD, PERCEPTUAL_EPSILON,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Prompt-level verdict in canonical candidate order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    Tie,
}

impl Verdict {
    pub fn mirrored(self) -> Self {
        match self {
            Verdict::A => Verdict::B,
            Verdict::B => Verdict::A,
            Verdict::Tie => Verdict::Tie,
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "A" => Some(Verdict::A),
            "B" => Some(Verdict::B),
            "Tie" => Some(Verdict::Tie),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::A => "A",
            Verdict::B => "B",
            Verdict::Tie => "Tie",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Alignment,
    Perceptual,
    Aesthetic,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Alignment, Dimension::Perceptual, Dimension::Aesthetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Alignment => "alignment",
            Dimension::Perceptual => "perceptual",
            Dimension::Aesthetic => "aesthetic",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "alignment" => Ok(Dimension::Alignment),
            "perceptual" => Ok(Dimension::Perceptual),
            "aesthetic" => Ok(Dimension::Aesthetic),
            other => Err(format!("unknown dimension {other:?}")),
        }
    }
}

/// One prompt-conditioned comparison between candidates A and B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOutcome {
    pub verdict: Verdict,
    pub dimension: Dimension,
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl PairwiseOutcome {
    pub fn new(verdict: Verdict, dimension: Dimension, prompt_id: impl Into<String>) -> Self {
        Self {
            verdict,
            dimension,
            prompt_id: prompt_id.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Counts prompt-level verdicts into micro-batch tallies.
pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> MicroBatchResult {
    let mut batch = MicroBatchResult::default();
    for v in verdicts {
        match v {
            Verdict::A => batch.wins_a += 1,
            Verdict::B => batch.wins_b += 1,
            Verdict::Tie => batch.ties += 1,
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_counts() {
        let v = [Verdict::A, Verdict::Tie, Verdict::A, Verdict::B];
        assert_eq!(tally(&v), MicroBatchResult::new(2, 1, 1));
    }

    #[test]
    fn labels_round_trip() {
        for v in [Verdict::A, Verdict::B, Verdict::Tie] {
            assert_eq!(Verdict::parse(&v.to_string()), Some(v));
        }
        assert_eq!(Verdict::parse("a"), None);
        for d in Dimension::ALL {
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), d);
        }
    }
}
