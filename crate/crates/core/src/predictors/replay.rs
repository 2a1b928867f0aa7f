use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{graph_from_completions, PredictError, Predictor};
use crate::corpus::{format_action_sequence, split_at_action, ContextSplit, Dialogue};
use crate::graph::PredictionGraph;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("failed reading replay store: {0}")]
    Io(#[from] io::Error),
    #[error("replay store line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("replay store line {line}: no rollouts for {id:?} at k={k}")]
    EmptyRollouts { line: usize, id: String, k: usize },
    #[error("replay store line {line}: duplicate key {id:?} at k={k}")]
    Duplicate { line: usize, id: String, k: usize },
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    id: String,
    k: usize,
    rollouts: Vec<String>,
}

/// Serialized rollouts keyed by `(dialogue id, k)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStore {
    entries: BTreeMap<(String, usize), Vec<String>>,
}

impl ReplayStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    /// Reads `{"id", "k", "rollouts": [str]}` lines. Rollout strings are
    /// kept verbatim and parsed at prediction time.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, ReplayError> {
        let mut entries = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreLine =
                serde_json::from_str(&line).map_err(|e| ReplayError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if rec.rollouts.is_empty() {
                return Err(ReplayError::EmptyRollouts {
                    line: i + 1,
                    id: rec.id,
                    k: rec.k,
                });
            }
            let key = (rec.id, rec.k);
            if entries.contains_key(&key) {
                return Err(ReplayError::Duplicate {
                    line: i + 1,
                    id: key.0,
                    k: key.1,
                });
            }
            entries.insert(key, rec.rollouts);
        }
        Ok(ReplayStore { entries })
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for ((id, k), rollouts) in &self.entries {
            let rec = StoreLine {
                id: id.clone(),
                k: *k,
                rollouts: rollouts.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// One rollout per split point: the true remaining actions, optionally
    /// cut to `horizon` steps (a horizon of 1 mimics a next-action model).
    pub fn from_ground_truth(dialogues: &[Dialogue], horizon: Option<usize>) -> Self {
        let mut entries = BTreeMap::new();
        for d in dialogues {
            for k in 0..=d.action_count() {
                let split = split_at_action(d, k).expect("k within action count");
                let mut future = split.future_actions;
                if let Some(h) = horizon {
                    future.truncate(h);
                }
                entries.insert((d.id.clone(), k), vec![format_action_sequence(&future)]);
            }
        }
        ReplayStore { entries }
    }

    pub fn insert(&mut self, id: impl Into<String>, k: usize, rollouts: Vec<String>) {
        self.entries.insert((id.into(), k), rollouts);
    }

    pub fn get(&self, id: &str, k: usize) -> Option<&[String]> {
        self.entries.get(&(id.to_string(), k)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores rollouts generated outside this crate.
#[derive(Debug, Clone)]
pub struct ReplayPredictor {
    store: ReplayStore,
    max_len: usize,
}

impl ReplayPredictor {
    pub fn new(store: ReplayStore, max_len: usize) -> Self {
        ReplayPredictor { store, max_len }
    }
}

impl Predictor for ReplayPredictor {
    fn predict(&self, split: &ContextSplit) -> Result<PredictionGraph, PredictError> {
        let rollouts = self.store.get(&split.dialogue_id, split.k).ok_or_else(|| {
            PredictError::MissingReplay {
                id: split.dialogue_id.clone(),
                k: split.k,
            }
        })?;
        Ok(graph_from_completions(
            split.last_action.as_ref(),
            rollouts,
            self.max_len,
        ))
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}
