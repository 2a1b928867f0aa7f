//! Replays conversations to measure how much of each workflow an assistant
//! could automate when its suggestions are approved against ground truth.
//!
//! In one-step mode the agent sees the next predicted action after every
//! executed action. In multi-step mode it sees a whole predicted sequence,
//! approves the longest prefix that matches the true workflow, and the
//! predictor is asked again from there.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_at_action, ActionStep, Dialogue};
use crate::predictors::{PredictError, Predictor};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("dialogue {0:?} has no workflow actions")]
    NoActions(String),
    #[error("action ordinal {i} out of range for dialogue {id:?}")]
    OrdinalOutOfRange { id: String, i: usize },
    #[error("prediction failed for dialogue {id:?}: {source}")]
    Predict {
        id: String,
        #[source]
        source: PredictError,
    },
    #[error("no dialogues to simulate")]
    Empty,
    #[error("all {0} conversations failed")]
    AllFailed(usize),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OneStep,
    MultiStep,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::OneStep => "1-step prediction",
            Mode::MultiStep => "Multi-step prediction",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-step" | "1-step" => Ok(Mode::OneStep),
            "multi-step" => Ok(Mode::MultiStep),
            other => Err(format!("unknown simulation mode {other:?}")),
        }
    }
}

/// What must match for a suggested step to be approved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approval {
    /// Action name and slot values.
    #[default]
    Joint,
    ActionOnly,
}

impl Approval {
    fn accepts(self, suggested: &ActionStep, truth: &ActionStep) -> bool {
        match self {
            Approval::Joint => suggested == truth,
            Approval::ActionOnly => suggested.name == truth.name,
        }
    }
}

/// How per-conversation percentages are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Mean of per-conversation ratios.
    #[default]
    Macro,
    /// Pooled counts over all conversations.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub approval: Approval,
    pub averaging: Averaging,
    pub jobs: Option<usize>,
}

impl SimulationConfig {
    pub fn new(mode: Mode) -> Self {
        SimulationConfig {
            mode,
            approval: Approval::default(),
            averaging: Averaging::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConversationRecord {
    pub id: String,
    pub suggestions: usize,
    pub steps_automated: usize,
    pub total_steps: usize,
    pub utterances_automated: usize,
    pub total_utterances: usize,
    /// Action ordinals that were automated.
    #[serde(skip)]
    pub automated: BTreeSet<usize>,
}

/// Utterance turns attributed to action `i`: those after action `i - 1`
/// (or the start) up to action `i`. Utterances after the last action
/// belong to no action.
pub fn utterance_span(d: &Dialogue, i: usize) -> Result<BTreeSet<usize>, SimulationError> {
    let positions = d.action_positions();
    let &end = positions
        .get(i)
        .ok_or_else(|| SimulationError::OrdinalOutOfRange {
            id: d.id.clone(),
            i,
        })?;
    let start = if i == 0 { 0 } else { positions[i - 1] + 1 };
    Ok(d.turns[start..end]
        .iter()
        .filter(|t| t.is_utterance())
        .map(|t| t.index)
        .collect())
}

fn predict_top1<P: Predictor + ?Sized>(
    predictor: &P,
    d: &Dialogue,
    k: usize,
) -> Result<Vec<ActionStep>, SimulationError> {
    let split = split_at_action(d, k).expect("k within action count");
    predictor
        .predict(&split)
        .map(|g| g.top1_sequence())
        .map_err(|source| SimulationError::Predict {
            id: d.id.clone(),
            source,
        })
}

fn record(d: &Dialogue, suggestions: usize, automated: BTreeSet<usize>) -> ConversationRecord {
    let mut utterances = BTreeSet::new();
    for &i in &automated {
        utterances.extend(utterance_span(d, i).expect("automated ordinal is valid"));
    }
    ConversationRecord {
        id: d.id.clone(),
        suggestions,
        steps_automated: automated.len(),
        total_steps: d.action_count(),
        utterances_automated: utterances.len(),
        total_utterances: d.utterance_count(),
        automated,
    }
}

/// Suggests only the next action after each executed action; `N` calls.
pub fn simulate_one_step<P: Predictor + ?Sized>(
    predictor: &P,
    d: &Dialogue,
    approval: Approval,
) -> Result<ConversationRecord, SimulationError> {
    let truth: Vec<&ActionStep> = d.workflow().collect();
    if truth.is_empty() {
        return Err(SimulationError::NoActions(d.id.clone()));
    }
    let mut automated = BTreeSet::new();
    for (k, expected) in truth.iter().enumerate() {
        let pred = predict_top1(predictor, d, k)?;
        if pred.first().is_some_and(|s| approval.accepts(s, expected)) {
            automated.insert(k);
        }
    }
    Ok(record(d, truth.len(), automated))
}

/// Suggests whole sequences; the approved prefix is executed and the
/// predictor is called again. A call with nothing approved costs one
/// manually performed action. At most `N` calls.
pub fn simulate_multi_step<P: Predictor + ?Sized>(
    predictor: &P,
    d: &Dialogue,
    approval: Approval,
) -> Result<ConversationRecord, SimulationError> {
    let truth: Vec<&ActionStep> = d.workflow().collect();
    let n = truth.len();
    if n == 0 {
        return Err(SimulationError::NoActions(d.id.clone()));
    }
    let mut automated = BTreeSet::new();
    let (mut k, mut suggestions) = (0, 0);
    while k < n && suggestions < n {
        let pred = predict_top1(predictor, d, k)?;
        suggestions += 1;
        let approved = pred
            .iter()
            .zip(&truth[k..])
            .take_while(|(p, t)| approval.accepts(p, t))
            .count();
        automated.extend(k..k + approved);
        k += approved.max(1);
    }
    Ok(record(d, suggestions, automated))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationAggregates {
    pub avg_suggestions: f64,
    pub pct_steps_automated: f64,
    pub pct_utterances_automated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mode: Mode,
    pub approval: Approval,
    pub averaging: Averaging,
    pub conversations: usize,
    pub failures: usize,
    pub skipped: usize,
    pub aggregates: SimulationAggregates,
    #[serde(skip)]
    pub records: Vec<ConversationRecord>,
}

fn aggregate(records: &[ConversationRecord], averaging: Averaging) -> SimulationAggregates {
    let n = records.len() as f64;
    let avg_suggestions = records.iter().map(|r| r.suggestions as f64).sum::<f64>() / n;
    let (pct_steps, pct_utts) = match averaging {
        Averaging::Macro => {
            let steps = records
                .iter()
                .map(|r| r.steps_automated as f64 / r.total_steps as f64)
                .sum::<f64>()
                / n;
            // conversations without utterances have nothing to automate
            let with_utts: Vec<_> = records.iter().filter(|r| r.total_utterances > 0).collect();
            let utts = if with_utts.is_empty() {
                0.0
            } else {
                with_utts
                    .iter()
                    .map(|r| r.utterances_automated as f64 / r.total_utterances as f64)
                    .sum::<f64>()
                    / with_utts.len() as f64
            };
            (steps, utts)
        }
        Averaging::Micro => {
            let sum =
                |f: fn(&ConversationRecord) -> usize| records.iter().map(f).sum::<usize>() as f64;
            let total_utts = sum(|r| r.total_utterances);
            (
                sum(|r| r.steps_automated) / sum(|r| r.total_steps),
                if total_utts > 0.0 {
                    sum(|r| r.utterances_automated) / total_utts
                } else {
                    0.0
                },
            )
        }
    };
    SimulationAggregates {
        avg_suggestions,
        pct_steps_automated: 100.0 * pct_steps,
        pct_utterances_automated: 100.0 * pct_utts,
    }
}

/// Simulates every dialogue with at least one action under `cfg.mode`.
/// Dialogues without actions are skipped; failed conversations are counted
/// and left out of the aggregates.
pub fn run_simulation<P: Predictor + ?Sized>(
    cfg: &SimulationConfig,
    predictor: &P,
    dialogues: &[Dialogue],
) -> Result<SimulationReport, SimulationError> {
    if dialogues.is_empty() {
        return Err(SimulationError::Empty);
    }
    let eligible: Vec<&Dialogue> = dialogues.iter().filter(|d| d.action_count() > 0).collect();
    let skipped = dialogues.len() - eligible.len();

    let run = || -> Vec<Result<ConversationRecord, SimulationError>> {
        eligible
            .par_iter()
            .map(|d| match cfg.mode {
                Mode::OneStep => simulate_one_step(predictor, d, cfg.approval),
                Mode::MultiStep => simulate_multi_step(predictor, d, cfg.approval),
            })
            .collect()
    };
    let results = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimulationError::Pool(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut records = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("{e}");
                failures += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(if failures == 0 {
            SimulationError::Empty
        } else {
            SimulationError::AllFailed(failures)
        });
    }
    Ok(SimulationReport {
        mode: cfg.mode,
        approval: cfg.approval,
        averaging: cfg.averaging,
        conversations: records.len(),
        failures,
        skipped,
        aggregates: aggregate(&records, cfg.averaging),
        records,
    })
}

impl SimulationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_records_csv(&[self], w)
    }
}

/// Per-conversation rows of every report, tagged with the mode.
pub fn write_records_csv<W: Write>(reports: &[&SimulationReport], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "mode,id,suggestions,steps_automated,total_steps,utterances_automated,total_utterances"
    )?;
    for rep in reports {
        let mode = match rep.mode {
            Mode::OneStep => "one-step",
            Mode::MultiStep => "multi-step",
        };
        for r in &rep.records {
            let id = if r.id.contains([',', '"', '\n']) {
                format!("\"{}\"", r.id.replace('"', "\"\""))
            } else {
                r.id.clone()
            };
            writeln!(
                w,
                "{mode},{id},{},{},{},{},{}",
                r.suggestions,
                r.steps_automated,
                r.total_steps,
                r.utterances_automated,
                r.total_utterances
            )?;
        }
    }
    Ok(())
}

/// Plain-text comparison table, one row per report.
pub fn format_table(reports: &[&SimulationReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} | {:>13} | {:>17} | {:>22}",
        "Approach", "Avg # sugg.", "% Steps automated", "% Utterances automated"
    );
    let _ = writeln!(out, "{}", "-".repeat(24 + 13 + 17 + 22 + 9));
    for r in reports {
        let a = &r.aggregates;
        let _ = writeln!(
            out,
            "{:<24} | {:>13.2} | {:>16.2}% | {:>21.2}%",
            r.mode.label(),
            a.avg_suggestions,
            a.pct_steps_automated,
            a.pct_utterances_automated
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContextSplit, TurnContent};
    use crate::graph::{aggregate_rollouts, PredictionGraph};
    use crate::predictors::{ReplayPredictor, ReplayStore};

    fn u(s: &str) -> TurnContent {
        TurnContent::User(s.into())
    }
    fn s(t: &str) -> TurnContent {
        TurnContent::System(t.into())
    }
    fn a(n: &str) -> TurnContent {
        TurnContent::Action(ActionStep::bare(n))
    }

    /// Returns a fixed sequence for every call, keyed by k.
    struct Scripted(Vec<Vec<&'static str>>);
    impl Predictor for Scripted {
        fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError> {
            let seq = self.0.get(split.k).cloned().unwrap_or_default();
            Ok(aggregate_rollouts(
                split.last_action.as_ref(),
                vec![seq.into_iter().map(ActionStep::bare).collect()],
                7,
            ))
        }
        fn max_len(&self) -> usize {
            7
        }
    }

    fn oracle(ds: &[Dialogue]) -> ReplayPredictor {
        ReplayPredictor::new(ReplayStore::from_ground_truth(ds, None), 20)
    }

    #[test]
    fn spans() {
        let d = Dialogue::new("d", "p", [u("x"), a("A"), s("y"), a("B")]);
        assert_eq!(utterance_span(&d, 0).unwrap(), BTreeSet::from([0]));
        assert_eq!(utterance_span(&d, 1).unwrap(), BTreeSet::from([2]));
        assert!(utterance_span(&d, 2).is_err());

        let d = Dialogue::new("d", "p", [a("A"), u("x"), a("B"), s("bye"), u("bye")]);
        assert!(utterance_span(&d, 0).unwrap().is_empty());
        assert_eq!(utterance_span(&d, 1).unwrap(), BTreeSet::from([1]));
    }

    #[test]
    fn oracle_one_step_uses_n_suggestions() {
        let d = Dialogue::new("d", "p", [u("x"), a("A"), s("y"), a("B"), a("C"), u("bye")]);
        let r = simulate_one_step(&oracle(std::slice::from_ref(&d)), &d, Approval::Joint).unwrap();
        assert_eq!((r.suggestions, r.steps_automated, r.total_steps), (3, 3, 3));
        // trailing farewell is in no span
        assert_eq!((r.utterances_automated, r.total_utterances), (2, 3));
    }

    #[test]
    fn oracle_multi_step_uses_one_suggestion() {
        let d = Dialogue::new("d", "p", [u("x"), a("A"), s("y"), a("B"), a("C")]);
        let r =
            simulate_multi_step(&oracle(std::slice::from_ref(&d)), &d, Approval::Joint).unwrap();
        assert_eq!((r.suggestions, r.steps_automated), (1, 3));
    }

    #[test]
    fn always_wrong_predictor() {
        let d = Dialogue::new("d", "p", [u("x"), a("A"), a("B")]);
        let p = Scripted(vec![vec!["Z"], vec!["Z"]]);
        let one = simulate_one_step(&p, &d, Approval::Joint).unwrap();
        assert_eq!((one.suggestions, one.steps_automated), (2, 0));
        let multi = simulate_multi_step(&p, &d, Approval::Joint).unwrap();
        assert_eq!((multi.suggestions, multi.steps_automated), (2, 0));
    }

    #[test]
    fn one_step_right_only_first() {
        let d = Dialogue::new("d", "p", [u("x"), a("A"), a("B")]);
        let p = Scripted(vec![vec!["A"], vec!["Z"]]);
        let r = simulate_one_step(&p, &d, Approval::Joint).unwrap();
        assert_eq!((r.suggestions, r.steps_automated), (2, 1));
    }

    #[test]
    fn multi_step_one_right_each_call() {
        let d = Dialogue::new("d", "p", [a("A"), a("B"), a("C"), a("D")]);
        let p = Scripted(vec![
            vec!["A", "Z"],
            vec!["B", "Z"],
            vec!["C", "Z"],
            vec!["D", "Z"],
        ]);
        let r = simulate_multi_step(&p, &d, Approval::Joint).unwrap();
        assert_eq!((r.suggestions, r.steps_automated), (4, 4));
    }

    #[test]
    fn multi_step_prefix_then_rest() {
        let d = Dialogue::new("d", "p", [a("A"), a("B"), a("C")]);
        let p = Scripted(vec![vec!["A", "B", "Z"], vec![], vec!["C"]]);
        let r = simulate_multi_step(&p, &d, Approval::Joint).unwrap();
        assert_eq!((r.suggestions, r.steps_automated), (2, 3));
    }

    #[test]
    fn approval_granularity() {
        let d = Dialogue::new(
            "d",
            "p",
            [TurnContent::Action(ActionStep::new("A", ["x"]).unwrap())],
        );
        let p = Scripted(vec![vec!["A"]]);
        assert_eq!(
            simulate_one_step(&p, &d, Approval::Joint)
                .unwrap()
                .steps_automated,
            0
        );
        assert_eq!(
            simulate_one_step(&p, &d, Approval::ActionOnly)
                .unwrap()
                .steps_automated,
            1
        );
    }

    #[test]
    fn minimal_wrong_report() {
        let d = Dialogue::new("d", "p", [u("x"), a("A")]);
        let r = run_simulation(
            &SimulationConfig::new(Mode::OneStep),
            &Scripted(vec![vec!["Z"]]),
            &[d],
        )
        .unwrap();
        assert_eq!(
            r.aggregates,
            SimulationAggregates {
                avg_suggestions: 1.0,
                pct_steps_automated: 0.0,
                pct_utterances_automated: 0.0
            }
        );
    }

    #[test]
    fn oracle_aggregates() {
        let ds = vec![
            Dialogue::new("a", "p", [u("x"), a("A"), a("B")]),
            Dialogue::new("b", "p", [u("x"), a("A"), s("y"), a("B"), a("C"), a("D")]),
            Dialogue::new("c", "p", [u("only talk")]),
        ];
        let p = oracle(&ds);
        let multi = run_simulation(&SimulationConfig::new(Mode::MultiStep), &p, &ds).unwrap();
        assert_eq!(multi.aggregates.avg_suggestions, 1.0);
        assert_eq!(multi.aggregates.pct_steps_automated, 100.0);
        assert_eq!(multi.skipped, 1);
        let one = run_simulation(&SimulationConfig::new(Mode::OneStep), &p, &ds).unwrap();
        assert_eq!(one.aggregates.avg_suggestions, 3.0);
        let table = format_table(&[&one, &multi]);
        assert!(table.contains("1-step prediction") && table.contains("Multi-step prediction"));
    }

    #[test]
    fn averaging_modes_differ() {
        let ds = vec![
            Dialogue::new("a", "p", [a("A")]),
            Dialogue::new("b", "p", [a("A"), a("B"), a("C")]),
        ];
        // right on A only
        let p = Scripted(vec![vec!["A"], vec!["Z"], vec!["Z"]]);
        let mut cfg = SimulationConfig::new(Mode::OneStep);
        let macro_ = run_simulation(&cfg, &p, &ds).unwrap();
        cfg.averaging = Averaging::Micro;
        let micro = run_simulation(&cfg, &p, &ds).unwrap();
        assert!(
            (macro_.aggregates.pct_steps_automated - 100.0 * (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-9
        );
        assert!((micro.aggregates.pct_steps_automated - 50.0).abs() < 1e-9);
    }

    #[test]
    fn all_failed_is_an_error() {
        let d = Dialogue::new("d", "p", [a("A")]);
        let p = ReplayPredictor::new(ReplayStore::default(), 7);
        assert!(matches!(
            run_simulation(&SimulationConfig::new(Mode::OneStep), &p, &[d]),
            Err(SimulationError::AllFailed(1))
        ));
        assert!(matches!(
            run_simulation(&SimulationConfig::new(Mode::OneStep), &p, &[]),
            Err(SimulationError::Empty)
        ));
    }
}
