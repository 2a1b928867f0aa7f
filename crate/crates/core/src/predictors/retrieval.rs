//! Nearest-neighbour retrieval of training examples by cosine similarity.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{
    format_action_sequence, render_context, split_at_action, Dialogue, FeatureMode, Turn,
};

/// Built-in deterministic vectorizer id.
pub const HASHED_TFIDF: &str = "hashed-tfidf";
/// Vectors supplied from a file (e.g. produced by a sentence encoder).
pub const PRECOMPUTED: &str = "precomputed";
/// Width of the token hash space. One extra dimension, [`HASH_DIM`]
/// itself, is reserved for empty texts.
pub const HASH_DIM: u32 = 4096;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown vectorizer {0:?}")]
    UnknownVectorizer(String),
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("requested top {k} of only {available} candidates")]
    NotEnoughEntries { k: usize, available: usize },
    #[error("vector file: {0}")]
    VectorFile(String),
    #[error("no precomputed vector for entry {0}")]
    MissingVector(usize),
    #[error("vector for entry {entry_id} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        entry_id: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector for entry {0} has zero norm")]
    ZeroVector(usize),
    #[error("index uses precomputed vectors; no query vector supplied")]
    NoQueryVector,
}

/// Sparse real vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    fn from_map(map: BTreeMap<u32, f64>) -> Self {
        SparseVector {
            entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for (_, v) in &mut self.entries {
                *v /= n;
            }
        }
        self
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Unit vector reserved for texts without tokens.
    fn empty_marker() -> Self {
        SparseVector {
            entries: vec![(HASH_DIM, 1.0)],
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased maximal runs of alphanumeric characters.
fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn bucket_counts(text: &str) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for tok in tokens(text) {
        let bucket = (fnv1a(tok.as_bytes()) % u64::from(HASH_DIM)) as u32;
        *counts.entry(bucket).or_insert(0.0) += 1.0;
    }
    counts
}

/// Hashed term-frequency / inverse-document-frequency model fitted on the
/// index texts. `idf = ln((1 + n) / (1 + df)) + 1`.
#[derive(Debug, Clone)]
struct HashedTfidf {
    docs: usize,
    df: HashMap<u32, usize>,
}

impl HashedTfidf {
    fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df = HashMap::new();
        let mut docs = 0;
        for text in texts {
            docs += 1;
            for bucket in bucket_counts(text).into_keys() {
                *df.entry(bucket).or_insert(0) += 1;
            }
        }
        HashedTfidf { docs, df }
    }

    fn embed(&self, text: &str) -> SparseVector {
        let n = self.docs as f64;
        let weighted = bucket_counts(text)
            .into_iter()
            .map(|(b, tf)| {
                let df = self.df.get(&b).copied().unwrap_or(0) as f64;
                (b, tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0))
            })
            .collect();
        let v = SparseVector::from_map(weighted);
        if v.is_zero() {
            SparseVector::empty_marker()
        } else {
            v.normalized()
        }
    }
}

#[derive(Debug, Clone)]
enum Vectorizer {
    Hashed(HashedTfidf),
    Precomputed,
}

/// One retrievable training example: a dialogue cut after `k` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entry_id: usize,
    pub dialogue_id: String,
    pub policy: String,
    pub k: usize,
    pub context: Vec<Turn>,
    pub retrieval_text: String,
    /// The remaining actions, serialized.
    pub target: String,
}

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
    vectors: Vec<SparseVector>,
    vectorizer: Vectorizer,
    features: FeatureMode,
}

/// `(dialogue position, k)` for every split with a non-empty future, in
/// corpus order. Entry ids are positions in this list.
pub fn split_points(dialogues: &[Dialogue]) -> Vec<(usize, usize)> {
    dialogues
        .iter()
        .enumerate()
        .flat_map(|(i, d)| (0..d.action_count()).map(move |k| (i, k)))
        .collect()
}

fn make_entries(dialogues: &[Dialogue], features: FeatureMode) -> Vec<IndexEntry> {
    split_points(dialogues)
        .into_iter()
        .enumerate()
        .map(|(entry_id, (i, k))| {
            let d = &dialogues[i];
            let split = split_at_action(d, k).expect("split point enumerated from the dialogue");
            IndexEntry {
                entry_id,
                dialogue_id: d.id.clone(),
                policy: d.policy.clone(),
                k,
                retrieval_text: render_context(&split.context, features),
                target: format_action_sequence(&split.future_actions),
                context: split.context,
            }
        })
        .collect()
}

impl RetrievalIndex {
    /// Indexes every split point with a non-empty future.
    pub fn build(
        dialogues: &[Dialogue],
        features: FeatureMode,
        vectorizer: &str,
    ) -> Result<Self, RetrievalError> {
        if vectorizer != HASHED_TFIDF {
            return Err(RetrievalError::UnknownVectorizer(vectorizer.to_string()));
        }
        if dialogues.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let entries = make_entries(dialogues, features);
        let model = HashedTfidf::fit(entries.iter().map(|e| e.retrieval_text.as_str()));
        let vectors = entries
            .iter()
            .map(|e| model.embed(&e.retrieval_text))
            .collect();
        Ok(RetrievalIndex {
            entries,
            vectors,
            vectorizer: Vectorizer::Hashed(model),
            features,
        })
    }

    /// Indexes every split point using externally computed vectors keyed by
    /// entry id.
    pub fn with_vectors(
        dialogues: &[Dialogue],
        features: FeatureMode,
        mut vectors: BTreeMap<usize, Vec<f64>>,
    ) -> Result<Self, RetrievalError> {
        if dialogues.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let entries = make_entries(dialogues, features);
        let mut dim = None;
        let mut out = Vec::with_capacity(entries.len());
        for e in &entries {
            let dense = vectors
                .remove(&e.entry_id)
                .ok_or(RetrievalError::MissingVector(e.entry_id))?;
            let expected = *dim.get_or_insert(dense.len());
            if dense.len() != expected {
                return Err(RetrievalError::DimensionMismatch {
                    entry_id: e.entry_id,
                    expected,
                    found: dense.len(),
                });
            }
            let v = SparseVector::from_dense(&dense);
            if v.is_zero() {
                return Err(RetrievalError::ZeroVector(e.entry_id));
            }
            out.push(v.normalized());
        }
        Ok(RetrievalIndex {
            entries,
            vectors: out,
            vectorizer: Vectorizer::Precomputed,
            features,
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn features(&self) -> FeatureMode {
        self.features
    }

    pub fn vectorizer_id(&self) -> &'static str {
        match self.vectorizer {
            Vectorizer::Hashed(_) => HASHED_TFIDF,
            Vectorizer::Precomputed => PRECOMPUTED,
        }
    }

    /// Embeds a query with the index's own vectorizer.
    pub fn embed(&self, text: &str) -> Result<SparseVector, RetrievalError> {
        match &self.vectorizer {
            Vectorizer::Hashed(model) => Ok(model.embed(text)),
            Vectorizer::Precomputed => Err(RetrievalError::NoQueryVector),
        }
    }

    /// The `k` entries most similar to `query`, best first; equal
    /// similarities keep ascending entry id. With `policy` set, only
    /// entries of that policy compete.
    pub fn top_k(
        &self,
        query: &SparseVector,
        k: usize,
        policy: Option<&str>,
    ) -> Result<Vec<(&IndexEntry, f64)>, RetrievalError> {
        let mut scored: Vec<(&IndexEntry, f64)> = self
            .entries
            .iter()
            .zip(&self.vectors)
            .filter(|(e, _)| policy.is_none_or(|p| e.policy == p))
            .map(|(e, v)| (e, v.dot(query)))
            .collect();
        if k > scored.len() {
            return Err(RetrievalError::NotEnoughEntries {
                k,
                available: scored.len(),
            });
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.entry_id.cmp(&b.0.entry_id)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Embeds `query_text` and returns its top `k` neighbours.
    pub fn retrieve_topk(
        &self,
        query_text: &str,
        k: usize,
    ) -> Result<Vec<(&IndexEntry, f64)>, RetrievalError> {
        let q = self.embed(query_text)?;
        self.top_k(&q, k, None)
    }
}

#[derive(Deserialize)]
struct VectorLine {
    entry_id: usize,
    vector: Vec<f64>,
}

/// Reads `{"entry_id": int, "vector": [float]}` lines.
pub fn load_vector_file(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<usize, Vec<f64>>, RetrievalError> {
    let file = File::open(path.as_ref())
        .map_err(|e| RetrievalError::VectorFile(format!("{}: {e}", path.as_ref().display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RetrievalError::VectorFile(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VectorLine = serde_json::from_str(&line)
            .map_err(|e| RetrievalError::VectorFile(format!("line {}: {e}", i + 1)))?;
        if out.insert(rec.entry_id, rec.vector).is_some() {
            return Err(RetrievalError::VectorFile(format!(
                "line {}: duplicate entry_id {}",
                i + 1,
                rec.entry_id
            )));
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct QueryLine {
    id: String,
    k: usize,
    vector: Vec<f64>,
}

/// Reads `{"id": str, "k": int, "vector": [float]}` lines, normalized.
pub fn load_query_vector_file(
    path: impl AsRef<Path>,
) -> Result<HashMap<(String, usize), SparseVector>, RetrievalError> {
    let file = File::open(path.as_ref())
        .map_err(|e| RetrievalError::VectorFile(format!("{}: {e}", path.as_ref().display())))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RetrievalError::VectorFile(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryLine = serde_json::from_str(&line)
            .map_err(|e| RetrievalError::VectorFile(format!("line {}: {e}", i + 1)))?;
        let key = (rec.id, rec.k);
        if out.contains_key(&key) {
            return Err(RetrievalError::VectorFile(format!(
                "line {}: duplicate query {:?} at k={}",
                i + 1,
                key.0,
                key.1
            )));
        }
        out.insert(key, SparseVector::from_dense(&rec.vector).normalized());
    }
    Ok(out)
}
