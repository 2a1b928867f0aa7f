use std::collections::HashMap;
use std::sync::Arc;

use super::{
    assemble_prompt, graph_from_completions, CompletionClient, PredictError, Predictor, PromptSpec,
    RetrievalIndex, SparseVector,
};
use crate::corpus::{render_context, ContextSplit};
use crate::graph::PredictionGraph;

/// Few-shot prediction: retrieve the `K` nearest training examples, prompt
/// the completion client for `R` samples, aggregate the parseable ones.
pub struct InContextPredictor {
    spec: PromptSpec,
    index: RetrievalIndex,
    client: Arc<dyn CompletionClient>,
    max_len: usize,
    same_policy_only: bool,
    query_vectors: HashMap<(String, usize), SparseVector>,
}

impl InContextPredictor {
    pub fn new(
        spec: PromptSpec,
        index: RetrievalIndex,
        client: Arc<dyn CompletionClient>,
        max_len: usize,
    ) -> Self {
        InContextPredictor {
            spec,
            index,
            client,
            max_len,
            same_policy_only: false,
            query_vectors: HashMap::new(),
        }
    }

    /// Only retrieve examples sharing the test dialogue's policy.
    pub fn same_policy_only(mut self, yes: bool) -> Self {
        self.same_policy_only = yes;
        self
    }

    /// Query vectors keyed by `(dialogue id, k)`, used instead of the
    /// index's vectorizer (required for precomputed indexes).
    pub fn with_query_vectors(mut self, vectors: HashMap<(String, usize), SparseVector>) -> Self {
        self.query_vectors = vectors;
        self
    }

    pub fn spec(&self) -> &PromptSpec {
        &self.spec
    }

    /// The prompt sent for `split`.
    pub fn prompt_for(&self, split: &ContextSplit) -> Result<String, PredictError> {
        let key = (split.dialogue_id.clone(), split.k);
        let query = match self.query_vectors.get(&key) {
            Some(v) => v.clone(),
            None => self.index.embed(&render_context(
                &split.context,
                self.spec.retrieval_features,
            ))?,
        };
        let policy = self.same_policy_only.then_some(split.policy.as_str());
        let top = self.index.top_k(&query, self.spec.k, policy)?;
        let examples: Vec<_> = top.into_iter().map(|(e, _)| e).collect();
        Ok(assemble_prompt(&self.spec, &examples, &split.context))
    }
}

impl Predictor for InContextPredictor {
    fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError> {
        let prompt = self.prompt_for(split)?;
        let completions = self.client.complete(&prompt, self.spec.rollouts)?;
        Ok(graph_from_completions(
            split.last_action.as_ref(),
            &completions,
            self.max_len,
        ))
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}
