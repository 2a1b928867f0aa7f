use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::{bleu, cascading_eval, exact_match, f1, graph_nll, View};
use crate::corpus::{split_at_action, ActionStep, Dialogue, SplitError};
use crate::predictors::Predictor;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("split points reference unknown dialogue {0:?}")]
    UnknownDialogue(String),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// Which `(dialogue, k)` pairs are evaluated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum SplitPolicy {
    /// Every `k` whose future is non-empty.
    #[default]
    All,
    /// Only `k = 0`, the start of each conversation.
    Start,
    /// Explicit action ordinals per dialogue id.
    Explicit(BTreeMap<String, Vec<usize>>),
}

impl SplitPolicy {
    fn points(&self, dialogues: &[Dialogue]) -> Result<Vec<(usize, usize)>, EvalError> {
        Ok(match self {
            SplitPolicy::All => crate::predictors::split_points(dialogues),
            SplitPolicy::Start => dialogues
                .iter()
                .enumerate()
                .filter(|(_, d)| d.action_count() > 0)
                .map(|(i, _)| (i, 0))
                .collect(),
            SplitPolicy::Explicit(map) => {
                let pos: BTreeMap<&str, usize> = dialogues
                    .iter()
                    .enumerate()
                    .map(|(i, d)| (d.id.as_str(), i))
                    .collect();
                let mut out = Vec::new();
                for (id, ks) in map {
                    let &i = pos
                        .get(id.as_str())
                        .ok_or_else(|| EvalError::UnknownDialogue(id.clone()))?;
                    for &k in ks {
                        split_at_action(&dialogues[i], k)?;
                        out.push((i, k));
                    }
                }
                out.sort_unstable();
                out
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Cut predictions and ground truth to the first `N` steps.
    pub horizon: Option<usize>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

/// All metrics for one split. Value and joint entries are `None` for
/// predictors that carry no slot values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleMetrics {
    pub id: String,
    pub k: usize,
    pub action_em: f64,
    pub value_em: Option<f64>,
    pub joint_em: Option<f64>,
    pub action_ce: f64,
    pub value_ce: Option<f64>,
    pub joint_ce: Option<f64>,
    pub action_f1: f64,
    pub value_f1: Option<f64>,
    pub joint_f1: Option<f64>,
    pub action_bleu: f64,
    pub value_bleu: Option<f64>,
    pub joint_bleu: Option<f64>,
    pub action_graph_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct MetricMeans {
    pub action_em: Option<f64>,
    pub value_em: Option<f64>,
    pub joint_em: Option<f64>,
    pub action_ce: Option<f64>,
    pub value_ce: Option<f64>,
    pub joint_ce: Option<f64>,
    pub action_f1: Option<f64>,
    pub value_f1: Option<f64>,
    pub joint_f1: Option<f64>,
    pub action_bleu: Option<f64>,
    pub value_bleu: Option<f64>,
    pub joint_bleu: Option<f64>,
    pub action_graph_nll: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedExample {
    pub id: String,
    pub k: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub count: usize,
    pub failures: usize,
    pub means: MetricMeans,
    pub failed: Vec<FailedExample>,
    #[serde(skip)]
    pub examples: Vec<ExampleMetrics>,
}

pub fn score_example(
    id: &str,
    k: usize,
    graph: &crate::graph::PredictionGraph,
    pred: &[ActionStep],
    gt: &[ActionStep],
    with_values: bool,
) -> ExampleMetrics {
    let opt = |f: fn(&[ActionStep], &[ActionStep], View) -> f64, v: View| {
        with_values.then(|| f(pred, gt, v))
    };
    ExampleMetrics {
        id: id.to_string(),
        k,
        action_em: exact_match(pred, gt, View::Action),
        value_em: opt(exact_match, View::Value),
        joint_em: opt(exact_match, View::Joint),
        action_ce: cascading_eval(pred, gt, View::Action),
        value_ce: opt(cascading_eval, View::Value),
        joint_ce: opt(cascading_eval, View::Joint),
        action_f1: f1(pred, gt, View::Action),
        value_f1: opt(f1, View::Value),
        joint_f1: opt(f1, View::Joint),
        action_bleu: bleu(pred, gt, View::Action),
        value_bleu: opt(bleu, View::Value),
        joint_bleu: opt(bleu, View::Joint),
        action_graph_nll: graph_nll(graph, gt),
    }
}

/// Runs `predictor` on every split point and scores its top-1 sequence and
/// graph against the true remaining actions.
///
/// Examples whose prediction fails are excluded from the means and listed
/// in [`MetricReport::failed`]. Means are accumulated in split order, so
/// the report does not depend on the number of workers.
pub fn evaluate_dataset<P: Predictor + ?Sized>(
    predictor: &P,
    dialogues: &[Dialogue],
    splits: &SplitPolicy,
    options: &EvalOptions,
) -> Result<MetricReport, EvalError> {
    let points = splits.points(dialogues)?;
    let with_values = predictor.predicts_values();

    let run = || -> Vec<Result<ExampleMetrics, FailedExample>> {
        points
            .par_iter()
            .map(|&(i, k)| {
                let d = &dialogues[i];
                let split = split_at_action(d, k).expect("validated split point");
                let graph = predictor.predict(&split).map_err(|e| FailedExample {
                    id: d.id.clone(),
                    k,
                    error: e.to_string(),
                })?;
                let mut pred = graph.top1_sequence();
                let mut gt = split.future_actions;
                if let Some(h) = options.horizon {
                    pred.truncate(h);
                    gt.truncate(h);
                }
                Ok(score_example(&d.id, k, &graph, &pred, &gt, with_values))
            })
            .collect()
    };

    let results = match options.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut examples = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(m) => examples.push(m),
            Err(f) => failed.push(f),
        }
    }
    Ok(MetricReport {
        count: examples.len(),
        failures: failed.len(),
        means: MetricMeans::of(&examples),
        failed,
        examples,
    })
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl MetricMeans {
    pub fn of(examples: &[ExampleMetrics]) -> Self {
        macro_rules! m {
            ($field:ident) => {
                mean(examples.iter().map(|e| Some(e.$field)))
            };
            (opt $field:ident) => {
                mean(examples.iter().map(|e| e.$field))
            };
        }
        MetricMeans {
            action_em: m!(action_em),
            value_em: m!(opt value_em),
            joint_em: m!(opt joint_em),
            action_ce: m!(action_ce),
            value_ce: m!(opt value_ce),
            joint_ce: m!(opt joint_ce),
            action_f1: m!(action_f1),
            value_f1: m!(opt value_f1),
            joint_f1: m!(opt joint_f1),
            action_bleu: m!(action_bleu),
            value_bleu: m!(opt value_bleu),
            joint_bleu: m!(opt joint_bleu),
            action_graph_nll: m!(action_graph_nll),
        }
    }
}

impl MetricReport {
    /// One row per scored example; non-applicable metrics are `N/A`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "id,k,action_em,value_em,joint_em,action_ce,value_ce,joint_ce,action_f1,value_f1,joint_f1,action_bleu,value_bleu,joint_bleu,action_graph_nll"
        )?;
        let opt = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |x| x.to_string());
        for e in &self.examples {
            let id = if e.id.contains([',', '"', '\n']) {
                format!("\"{}\"", e.id.replace('"', "\"\""))
            } else {
                e.id.clone()
            };
            writeln!(
                w,
                "{id},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.k,
                e.action_em,
                opt(e.value_em),
                opt(e.joint_em),
                e.action_ce,
                opt(e.value_ce),
                opt(e.joint_ce),
                e.action_f1,
                opt(e.value_f1),
                opt(e.joint_f1),
                e.action_bleu,
                opt(e.value_bleu),
                opt(e.joint_bleu),
                e.action_graph_nll
            )?;
        }
        Ok(())
    }
}
