use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{GraphError, PredictionGraph, START};
use crate::corpus::{ActionStep, Dialogue};

/// One transition graph per policy, built from historical workflows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyGraphSet {
    pub t_edge: u64,
    pub max_len: usize,
    pub policies: BTreeMap<String, PredictionGraph>,
}

/// Counts `(a_t, a_{t+1})` transitions of every workflow of each policy,
/// with [`START`] prepended, and keeps edges seen at least `t_edge` times.
///
/// Every policy that occurs in `dialogues` gets a graph, even when none of
/// its edges survive.
pub fn build_policy_graphs(
    dialogues: &[Dialogue],
    t_edge: u64,
    max_len: usize,
) -> Result<PolicyGraphSet, GraphError> {
    if t_edge == 0 {
        return Err(GraphError::InvalidThreshold);
    }
    if max_len == 0 {
        return Err(GraphError::InvalidMaxLen);
    }

    let mut counts: BTreeMap<&str, BTreeMap<(&str, &str), u64>> = BTreeMap::new();
    for d in dialogues {
        let per_policy = counts.entry(d.policy.as_str()).or_default();
        let mut prev = START;
        for step in d.workflow() {
            *per_policy.entry((prev, step.name.as_str())).or_insert(0) += 1;
            prev = &step.name;
        }
    }

    let policies = counts
        .into_iter()
        .map(|(policy, edges)| {
            let mut g = PredictionGraph::root_only(START, max_len);
            for ((from, to), n) in edges {
                if n >= t_edge {
                    g.add_count(from, to, n);
                }
            }
            (policy.to_string(), g)
        })
        .collect();

    Ok(PolicyGraphSet {
        t_edge,
        max_len,
        policies,
    })
}

impl PolicyGraphSet {
    pub fn policy(&self, policy: &str) -> Result<&PredictionGraph, GraphError> {
        self.policies
            .get(policy)
            .ok_or_else(|| GraphError::UnknownPolicy(policy.to_string()))
    }

    /// The part of the policy graph reachable from the last executed action
    /// (or [`START`]), counts preserved.
    ///
    /// An action the policy graph has never seen yields a root-only graph.
    pub fn traverse(
        &self,
        policy: &str,
        last_action: Option<&ActionStep>,
    ) -> Result<PredictionGraph, GraphError> {
        let full = self.policy(policy)?;
        let root = last_action.map_or(START, |a| a.name.as_str());
        let mut out = PredictionGraph::root_only(root, self.max_len);
        if !full.contains_node(root) {
            return Ok(out);
        }

        let mut seen = std::collections::BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            for (to, count) in full.successors(node) {
                out.add_count(node, to, count);
                if seen.insert(to) {
                    queue.push_back(to);
                }
            }
        }
        Ok(out)
    }

    /// Graphviz text with one cluster per policy.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph policies {\n");
        for (i, (policy, g)) in self.policies.iter().enumerate() {
            out.push_str(&format!(
                "  subgraph cluster_{i} {{\n    label=\"{}\";\n",
                policy.replace('"', "\\\"")
            ));
            for (from, to, count) in g.edges() {
                let p = g.probability(from, to).unwrap_or(0.0);
                out.push_str(&format!(
                    "    \"{i}:{}\" -> \"{i}:{}\" [label=\"{p:.3}\", weight={count}];\n",
                    from.replace('"', "\\\""),
                    to.replace('"', "\\\"")
                ));
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }
}

/// Nearest-rank percentile (`ceil(q/100 * n)`-th smallest) of workflow
/// lengths, over dialogues with at least one action.
pub fn sequence_length_percentile(dialogues: &[Dialogue], q: f64) -> Result<usize, GraphError> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(GraphError::InvalidPercentile(q));
    }
    let mut lengths: Vec<usize> = dialogues
        .iter()
        .map(Dialogue::action_count)
        .filter(|&n| n > 0)
        .collect();
    if lengths.is_empty() {
        return Err(GraphError::NoWorkflows);
    }
    lengths.sort_unstable();
    let n = lengths.len();
    let rank = ((q * n as f64) / 100.0).ceil() as usize;
    Ok(lengths[rank.clamp(1, n) - 1])
}
