//! Multi-step action state tracking for task-oriented dialogue.
//!
//! Given the context of a conversation, predict every workflow action the
//! agent still has to perform. Predictions are weighted directed graphs over
//! action names; the crate builds them from historical workflows
//! ([`graph::build_policy_graphs`]) or from sampled rollouts
//! ([`graph::aggregate_rollouts`]), scores them ([`metrics`]), and replays
//! conversations to measure how much of a workflow could be automated
//! ([`simulator`]).

pub mod corpus;
pub mod graph;
pub mod metrics;
pub mod predictors;
pub mod simulator;

pub use corpus::{ActionStep, ContextSplit, Dialogue, Turn, TurnContent};
pub use graph::{PolicyGraphSet, PredictionGraph, START};
pub use predictors::Predictor;
