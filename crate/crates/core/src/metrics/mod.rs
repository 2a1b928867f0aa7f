//! Sequence and graph metrics for multi-step action prediction.
//!
//! Sequence metrics compare the top-1 predicted sequence with the true
//! remaining actions under one of three views: action names only, slot
//! values only, or the full step.

mod report;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::ActionStep;
use crate::graph::PredictionGraph;

pub use report::{
    evaluate_dataset, EvalError, EvalOptions, ExampleMetrics, MetricMeans, MetricReport,
    SplitPolicy,
};

/// Probability charged for a transition the graph does not contain.
pub const MISSING_EDGE_PROB: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Action,
    Value,
    Joint,
}

impl View {
    pub const ALL: [View; 3] = [View::Action, View::Value, View::Joint];
}

/// The three string views of one step sequence, element-aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceView {
    pub action_view: Vec<String>,
    pub value_view: Vec<String>,
    pub joint_view: Vec<String>,
}

impl SequenceView {
    pub fn new(steps: &[ActionStep]) -> Self {
        SequenceView {
            action_view: steps.iter().map(|s| s.name.clone()).collect(),
            value_view: steps.iter().map(value_string).collect(),
            joint_view: steps.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn get(&self, view: View) -> &[String] {
        match view {
            View::Action => &self.action_view,
            View::Value => &self.value_view,
            View::Joint => &self.joint_view,
        }
    }
}

/// Values of one step as `[v1, v2]`; `[]` when there are none.
fn value_string(step: &ActionStep) -> String {
    format!("[{}]", step.values.join(", "))
}

pub fn view_of(steps: &[ActionStep], view: View) -> Vec<String> {
    match view {
        View::Action => steps.iter().map(|s| s.name.clone()).collect(),
        View::Value => steps.iter().map(value_string).collect(),
        View::Joint => steps.iter().map(ToString::to_string).collect(),
    }
}

/// 1 iff both views are identical sequences.
pub fn exact_match(pred: &[ActionStep], gt: &[ActionStep], view: View) -> f64 {
    if view_of(pred, view) == view_of(gt, view) {
        1.0
    } else {
        0.0
    }
}

/// Prefix credit: the fraction of `k = 1..=|gt|` for which the first `k`
/// predicted elements equal the first `k` true ones. Extra predicted steps
/// beyond `|gt|` are never penalised. An empty `gt` scores 1 only against
/// an empty prediction.
pub fn cascading_eval(pred: &[ActionStep], gt: &[ActionStep], view: View) -> f64 {
    if gt.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    let (p, g) = (view_of(pred, view), view_of(gt, view));
    // The prefix matches up to the first mismatch and fails after it.
    let common = p.iter().zip(&g).take_while(|(a, b)| a == b).count();
    common as f64 / g.len() as f64
}

/// Set F1 over deduplicated view elements. Both empty: 1; one empty: 0.
pub fn f1(pred: &[ActionStep], gt: &[ActionStep], view: View) -> f64 {
    let p: HashSet<String> = view_of(pred, view).into_iter().collect();
    let g: HashSet<String> = view_of(gt, view).into_iter().collect();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let common = p.intersection(&g).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// BLEU tokens of a view: elements joined by `"; "`, then split on
/// whitespace with `;`, `[`, `]` and `,` as standalone tokens.
pub fn bleu_tokens(steps: &[ActionStep], view: View) -> Vec<String> {
    let joined = view_of(steps, view).join("; ");
    let mut spaced = String::with_capacity(joined.len() * 2);
    for c in joined.chars() {
        if matches!(c, ';' | '[' | ']' | ',') {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Sentence BLEU-4 in `[0, 100]` with uniform weights and brevity penalty.
///
/// Orders 2..=4 with no matching n-gram use `1 / (total + 1)` as their
/// precision; zero unigram matches score 0.
pub fn bleu(pred: &[ActionStep], gt: &[ActionStep], view: View) -> f64 {
    bleu_from_tokens(&bleu_tokens(pred, view), &bleu_tokens(gt, view))
}

pub fn bleu_from_tokens(hyp: &[String], reference: &[String]) -> f64 {
    match (hyp.is_empty(), reference.is_empty()) {
        (true, true) => return 100.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (matched, total) = clipped_matches(hyp, reference, n);
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += 0.25 * precision.ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * brevity * log_sum.exp()
}

fn clipped_matches(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in reference.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in hyp.windows(n) {
        *hyp_counts.entry(gram).or_insert(0) += 1;
    }
    let matched = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// Negative log-likelihood of the true action names walked from the root.
///
/// Each step charges `-ln p(next | prev)`; an absent edge (or unknown
/// `prev`) charges `-ln 1e-30`, and the walk continues from the true
/// action either way.
pub fn graph_nll(graph: &PredictionGraph, gt: &[ActionStep]) -> f64 {
    let mut prev = graph.root();
    let mut nll = 0.0;
    for step in gt {
        let p = graph
            .probability(prev, &step.name)
            .unwrap_or(MISSING_EDGE_PROB);
        nll -= p.ln();
        prev = &step.name;
    }
    nll
}
