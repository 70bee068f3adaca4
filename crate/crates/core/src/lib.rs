//! Dynamic pairwise evaluation arena.

pub mod baselines;
pub mod evaluators;
pub mod jsonl;
pub mod matchlog;
pub mod normal;
pub mod prompts;
pub mod rating;
pub mod scheduler;
pub mod sim;
