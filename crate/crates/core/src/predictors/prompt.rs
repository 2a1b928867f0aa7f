use serde::{Deserialize, Serialize};

use super::IndexEntry;
use crate::corpus::{render_context, FeatureMode, Turn};

pub const DEFAULT_INSTRUCTION: &str = "You are a helping a user with a customer service issue. \
Predict the sequence of actions the system should take in the future. Follow the format in the \
examples: add optional values in square brackets and add a semicolon between actions.";

/// Everything that shapes the few-shot prompt and its sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub instruction: String,
    /// Retrieved examples per prompt.
    pub k: usize,
    /// Completions sampled per prediction.
    pub rollouts: usize,
    pub retrieval_features: FeatureMode,
    pub prediction_features: FeatureMode,
    pub temperature: f64,
    /// Prompts longer than this drop their lowest-ranked examples.
    pub max_prompt_chars: Option<usize>,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            k: 5,
            rollouts: 20,
            retrieval_features: FeatureMode::UtterancesAndActions,
            prediction_features: FeatureMode::UtterancesAndActions,
            temperature: 1.0,
            max_prompt_chars: None,
        }
    }
}

fn context_block(turns: &[Turn], mode: FeatureMode) -> String {
    let rendered = render_context(turns, mode);
    if rendered.is_empty() {
        "Context:\n(none)".to_string()
    } else {
        format!("Context:\n{rendered}")
    }
}

/// Instruction, one `Example#i:` block per retrieved example (context and
/// its target actions), then the test context as a final block whose
/// `Actions:` line is left for the model to complete.
pub fn assemble_prompt(
    spec: &PromptSpec,
    examples: &[&IndexEntry],
    test_context: &[Turn],
) -> String {
    let render = |examples: &[&IndexEntry]| {
        let mut out = spec.instruction.clone();
        for (i, e) in examples.iter().enumerate() {
            out.push_str(&format!(
                "\n\nExample#{}:\n{}\nActions: {}",
                i + 1,
                context_block(&e.context, spec.prediction_features),
                e.target
            ));
        }
        out.push_str(&format!(
            "\n\nExample#{}:\n{}\nActions:",
            examples.len() + 1,
            context_block(test_context, spec.prediction_features)
        ));
        out
    };

    let mut kept = examples.len();
    let mut prompt = render(examples);
    if let Some(limit) = spec.max_prompt_chars {
        while prompt.chars().count() > limit && kept > 0 {
            kept -= 1;
            prompt = render(&examples[..kept]);
        }
    }
    prompt
}
