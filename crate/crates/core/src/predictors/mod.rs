//! Predictors turn a dialogue context into a [`PredictionGraph`].
//!
//! * [`TraversalPredictor`] walks per-policy graphs built from training
//!   workflows. No model, no rollouts.
//! * [`InContextPredictor`] retrieves similar training examples, prompts a
//!   completion endpoint `R` times and aggregates the sampled sequences.
//! * [`ReplayPredictor`] aggregates rollouts produced elsewhere (e.g. a
//!   fine-tuned seq2seq model) and stored on disk.

mod client;
mod in_context;
mod prompt;
mod replay;
mod retrieval;
mod traversal;

use thiserror::Error;

use crate::corpus::{parse_action_string, ActionStep, ContextSplit};
use crate::graph::{aggregate_rollouts, GraphError, PredictionGraph};

pub use client::{
    ClientError, CompletionClient, EchoStubClient, HttpClientConfig, HttpCompletionClient,
};
pub use in_context::InContextPredictor;
pub use prompt::{assemble_prompt, PromptSpec, DEFAULT_INSTRUCTION};
pub use replay::{ReplayError, ReplayPredictor, ReplayStore};
pub use retrieval::{
    load_query_vector_file, load_vector_file, split_points, IndexEntry, RetrievalError,
    RetrievalIndex, SparseVector, HASHED_TFIDF, HASH_DIM, PRECOMPUTED,
};
pub use traversal::TraversalPredictor;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("no stored rollouts for dialogue {id:?} at k={k}")]
    MissingReplay { id: String, k: usize },
}

/// Maps a dialogue context to a graph of future actions.
///
/// The returned graph is rooted at the context's last action (or
/// [`crate::graph::START`]) and its top-1 sequence never exceeds
/// [`Predictor::max_len`] steps.
pub trait Predictor: Send + Sync {
    fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError>;

    fn max_len(&self) -> usize;

    /// `false` for predictors whose graphs carry no slot values; value and
    /// joint metrics are then not applicable.
    fn predicts_values(&self) -> bool {
        true
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError> {
        (**self).predict(split)
    }

    fn max_len(&self) -> usize {
        (**self).max_len()
    }

    fn predicts_values(&self) -> bool {
        (**self).predicts_values()
    }
}

/// Parses each sampled completion and aggregates the parseable ones.
/// Unparseable samples are dropped; if none survive the graph is root-only.
pub fn graph_from_completions<S: AsRef<str>>(
    last_action: Option<&ActionStep>,
    completions: &[S],
    max_len: usize,
) -> PredictionGraph {
    let rollouts: Vec<Vec<ActionStep>> = completions
        .iter()
        .filter_map(|c| match parse_action_string(first_line(c.as_ref())) {
            Ok(steps) => Some(steps),
            Err(e) => {
                log::debug!("dropping unparseable rollout: {e}");
                None
            }
        })
        .collect();
    if rollouts.is_empty() {
        let root = last_action.map_or(crate::graph::START, |a| a.name.as_str());
        return PredictionGraph::root_only(root, max_len);
    }
    aggregate_rollouts(last_action, rollouts, max_len)
}

/// Completions sometimes run on past the action line; only the first
/// non-blank line is an action sequence.
fn first_line(s: &str) -> &str {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn garbage_completions_give_root_only_graph() {
        let a = ActionStep::bare("A");
        let g = graph_from_completions(Some(&a), &["garbage[[", "garbage[[", "garbage[["], 7);
        assert_eq!(g.root(), "A");
        assert_eq!(g.edges().count(), 0);
        assert!(g.top1_sequence().is_empty());
    }

    #[test]
    fn unparseable_completions_are_dropped() {
        let g = graph_from_completions(None, &["B; C", "B]", "B; C"], 7);
        assert_eq!(g.rollouts().unwrap().len(), 2);
        assert_eq!(g.edge_count("START", "B"), 2);
    }

    #[test]
    fn trailing_lines_are_ignored() {
        let g = graph_from_completions(None, &["\nB; C\n\nExample#7:"], 7);
        assert_eq!(
            g.top1_sequence(),
            [ActionStep::bare("B"), ActionStep::bare("C")]
        );
    }
}
