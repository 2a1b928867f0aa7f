//! Weighted directed graphs over action names.
//!
//! Nodes are bare action names: slot values never take part in node
//! identity, so a workflow that repeats an action produces a cycle. Edge
//! weights are transition counts; the probability of `from -> to` is the
//! count normalised over all edges leaving `from`.

mod policy;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{format_action_sequence, parse_action_string, ActionParseError, ActionStep};

pub use policy::{build_policy_graphs, sequence_length_percentile, PolicyGraphSet};

/// Synthetic root used when no action has been executed yet. Never emitted
/// in predicted sequences.
pub const START: &str = "START";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge threshold must be at least 1")]
    InvalidThreshold,
    #[error("max_len must be at least 1")]
    InvalidMaxLen,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("percentile must lie in (0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("no dialogue with at least one action")]
    NoWorkflows,
    #[error("edge {from:?} -> {to:?} has zero count")]
    ZeroCount { from: String, to: String },
    #[error("rollout step {step:?} must hold exactly one action: {reason}")]
    InvalidRolloutStep { step: String, reason: String },
    #[error(transparent)]
    Parse(#[from] ActionParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct PredictionGraph {
    root: String,
    max_len: usize,
    edges: BTreeMap<String, BTreeMap<String, u64>>,
    rollouts: Option<Vec<Vec<ActionStep>>>,
}

impl PredictionGraph {
    /// A graph holding only its root: every transition out of it is missing.
    pub fn root_only(root: impl Into<String>, max_len: usize) -> Self {
        PredictionGraph {
            root: root.into(),
            max_len,
            edges: BTreeMap::new(),
            rollouts: None,
        }
    }

    /// Builds a graph from explicit `(from, to, count)` triples; repeated
    /// pairs are summed.
    pub fn from_edges<'a>(
        root: impl Into<String>,
        max_len: usize,
        edges: impl IntoIterator<Item = (&'a str, &'a str, u64)>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::root_only(root, max_len);
        for (from, to, count) in edges {
            if count == 0 {
                return Err(GraphError::ZeroCount {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
            g.add_count(from, to, count);
        }
        Ok(g)
    }

    pub(crate) fn add_count(&mut self, from: &str, to: &str, count: u64) {
        *self
            .edges
            .entry(from.to_string())
            .or_default()
            .entry(to.to_string())
            .or_insert(0) += count;
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn rollouts(&self) -> Option<&[Vec<ActionStep>]> {
        self.rollouts.as_deref()
    }

    /// Root plus every edge endpoint.
    pub fn nodes(&self) -> BTreeSet<&str> {
        let mut nodes = BTreeSet::from([self.root.as_str()]);
        for (from, tos) in &self.edges {
            nodes.insert(from);
            nodes.extend(tos.keys().map(String::as_str));
        }
        nodes
    }

    pub fn contains_node(&self, name: &str) -> bool {
        self.root == name
            || self.edges.contains_key(name)
            || self.edges.values().any(|tos| tos.contains_key(name))
    }

    /// `(from, to, count)` in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> + '_ {
        self.edges.iter().flat_map(|(from, tos)| {
            tos.iter()
                .map(move |(to, &count)| (from.as_str(), to.as_str(), count))
        })
    }

    pub fn edge_count(&self, from: &str, to: &str) -> u64 {
        self.edges
            .get(from)
            .and_then(|tos| tos.get(to))
            .copied()
            .unwrap_or(0)
    }

    pub fn successors(&self, from: &str) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.edges
            .get(from)
            .into_iter()
            .flat_map(|tos| tos.iter().map(|(to, &c)| (to.as_str(), c)))
    }

    pub fn total_edge_count(&self) -> u64 {
        self.edges.values().flat_map(|tos| tos.values()).sum()
    }

    /// `p(to | from)`, or `None` when the edge is absent.
    pub fn probability(&self, from: &str, to: &str) -> Option<f64> {
        let tos = self.edges.get(from)?;
        let count = *tos.get(to)?;
        let total: u64 = tos.values().sum();
        Some(count as f64 / total as f64)
    }

    /// Product of edge probabilities along `root -> path[0] -> path[1] ...`;
    /// zero if any edge is absent.
    pub fn path_probability<'a>(&self, path: impl IntoIterator<Item = &'a str>) -> f64 {
        let mut prev = self.root.as_str();
        let mut p = 1.0;
        for name in path {
            p *= self.probability(prev, name).unwrap_or(0.0);
            prev = name;
        }
        p
    }

    /// The single most likely action chain.
    ///
    /// Graphs built from rollouts return their modal rollout (ties broken by
    /// higher path probability, then by the smaller serialization). Other
    /// graphs are walked greedily from the root along the most probable
    /// edge, ties broken by action name, for at most `max_len` steps.
    pub fn top1_sequence(&self) -> Vec<ActionStep> {
        match self.rollouts.as_deref() {
            Some(rollouts) if !rollouts.is_empty() => self.modal_rollout(rollouts),
            _ => self.greedy_walk(),
        }
    }

    fn modal_rollout(&self, rollouts: &[Vec<ActionStep>]) -> Vec<ActionStep> {
        let mut freq: HashMap<&[ActionStep], usize> = HashMap::new();
        for r in rollouts {
            *freq.entry(r.as_slice()).or_insert(0) += 1;
        }
        let mut ranked: Vec<(usize, f64, String, &[ActionStep])> = freq
            .into_iter()
            .map(|(r, n)| {
                let p = self.path_probability(r.iter().map(|s| s.name.as_str()));
                (n, p, format_action_sequence(r), r)
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(b.1.total_cmp(&a.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let best = ranked[0].3;
        best[..best.len().min(self.max_len)].to_vec()
    }

    fn greedy_walk(&self) -> Vec<ActionStep> {
        let mut out = Vec::new();
        let mut current = self.root.as_str();
        while out.len() < self.max_len {
            let mut best: Option<(&str, u64)> = None;
            for (to, count) in self.successors(current) {
                if best.is_none_or(|(_, c)| count > c) {
                    best = Some((to, count));
                }
            }
            let Some((next, _)) = best else { break };
            out.push(ActionStep::bare(next));
            current = next;
        }
        out
    }

    /// Graphviz text; edges labelled with their probability.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {} {{\n", quote_dot(name));
        let _ = writeln!(out, "  {} [shape=doublecircle];", quote_dot(&self.root));
        for node in self.nodes() {
            if node != self.root {
                let _ = writeln!(out, "  {};", quote_dot(node));
            }
        }
        for (from, to, count) in self.edges() {
            let p = self.probability(from, to).unwrap_or(0.0);
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{p:.3}\", weight={count}];",
                quote_dot(from),
                quote_dot(to)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn quote_dot(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Counts every transition of every rollout as an edge.
///
/// The root is the last executed action, or [`START`] at the beginning of a
/// conversation. Rollouts are cut to `max_len` steps and kept on the graph
/// so [`PredictionGraph::top1_sequence`] can return a sequence some sample
/// actually produced, slot values included.
pub fn aggregate_rollouts(
    last_action: Option<&ActionStep>,
    rollouts: Vec<Vec<ActionStep>>,
    max_len: usize,
) -> PredictionGraph {
    let root = last_action.map_or(START, |a| a.name.as_str());
    let mut graph = PredictionGraph::root_only(root, max_len);
    let mut kept = Vec::with_capacity(rollouts.len());
    for mut rollout in rollouts {
        rollout.truncate(max_len);
        let mut prev = root.to_string();
        for step in &rollout {
            graph.add_count(&prev, &step.name, 1);
            prev.clone_from(&step.name);
        }
        kept.push(rollout);
    }
    graph.rollouts = Some(kept);
    graph
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    root: String,
    max_len: usize,
    edges: Vec<EdgeJson>,
    rollouts: Option<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    from: String,
    to: String,
    count: u64,
}

impl From<PredictionGraph> for GraphJson {
    fn from(g: PredictionGraph) -> Self {
        GraphJson {
            edges: g
                .edges()
                .map(|(from, to, count)| EdgeJson {
                    from: from.to_string(),
                    to: to.to_string(),
                    count,
                })
                .collect(),
            rollouts: g.rollouts.as_ref().map(|rs| {
                rs.iter()
                    .map(|r| r.iter().map(ToString::to_string).collect())
                    .collect()
            }),
            root: g.root,
            max_len: g.max_len,
        }
    }
}

impl TryFrom<GraphJson> for PredictionGraph {
    type Error = GraphError;

    fn try_from(j: GraphJson) -> Result<Self, Self::Error> {
        let mut g = PredictionGraph::from_edges(
            j.root,
            j.max_len,
            j.edges
                .iter()
                .map(|e| (e.from.as_str(), e.to.as_str(), e.count)),
        )?;
        if let Some(rollouts) = j.rollouts {
            let mut parsed = Vec::with_capacity(rollouts.len());
            for r in rollouts {
                let mut steps = Vec::with_capacity(r.len());
                for s in r {
                    let mut one = parse_action_string(&s)?;
                    if one.len() != 1 {
                        return Err(GraphError::InvalidRolloutStep {
                            step: s,
                            reason: format!("found {} actions", one.len()),
                        });
                    }
                    steps.push(one.remove(0));
                }
                parsed.push(steps);
            }
            g.rollouts = Some(parsed);
        }
        Ok(g)
    }
}
