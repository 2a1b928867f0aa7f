use super::{PredictError, Predictor};
use crate::corpus::ContextSplit;
use crate::graph::{PolicyGraphSet, PredictionGraph};

/// Zero-shot prediction: the policy graph reachable from the last action.
#[derive(Debug, Clone)]
pub struct TraversalPredictor {
    graphs: PolicyGraphSet,
}

impl TraversalPredictor {
    pub fn new(graphs: PolicyGraphSet) -> Self {
        TraversalPredictor { graphs }
    }

    pub fn graphs(&self) -> &PolicyGraphSet {
        &self.graphs
    }
}

impl Predictor for TraversalPredictor {
    fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError> {
        Ok(self
            .graphs
            .traverse(&split.policy, split.last_action.as_ref())?)
    }

    fn max_len(&self) -> usize {
        self.graphs.max_len
    }

    fn predicts_values(&self) -> bool {
        false
    }
}
