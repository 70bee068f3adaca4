//! Command implementations behind the `arena` binary.

pub mod commands;
pub mod config;
pub mod providers;

pub use commands::{cmd_analyze, cmd_arena, cmd_prompts, cmd_replay, cmd_simulate};
pub use config::Config;
