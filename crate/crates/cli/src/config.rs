use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use multistep_ast::corpus::FeatureMode;
use multistep_ast::predictors::{HttpClientConfig, PromptSpec, HASHED_TFIDF};
use serde::{Deserialize, Serialize};

use crate::error::{CmdResult, Context};

pub const URL_VAR: &str = "AST_COMPLETION_URL";
pub const KEY_VAR: &str = "AST_COMPLETION_KEY";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub predictor: PredictorConfig,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
    /// Forwarded to sampling endpoints that accept one.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Corpus that graphs and retrieval indexes are built from.
    pub train: Option<PathBuf>,
    /// Corpus that is evaluated; defaults to `train`.
    pub test: Option<PathBuf>,
    pub format: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train: None,
            test: None,
            format: "jsonl-v1".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    #[default]
    Traversal,
    InContext,
    Replay,
    Oracle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClientKind {
    #[default]
    EchoStub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Falls back to the `AST_COMPLETION_URL` environment variable.
    pub url: Option<String>,
    pub model: String,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        let http = HttpClientConfig::default();
        ClientConfig {
            kind: ClientKind::default(),
            url: None,
            model: http.model,
            max_attempts: http.max_attempts,
            initial_backoff_ms: http.initial_backoff_ms,
            max_in_flight: http.max_in_flight,
            timeout_secs: http.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub t_edge: u64,
    /// Fixed prediction length; otherwise the `percentile` of training
    /// workflow lengths.
    pub max_len: Option<usize>,
    pub percentile: f64,
    /// Prebuilt graph set for the traversal predictor.
    pub graphs: Option<PathBuf>,
    pub prompt: PromptSpec,
    pub vectorizer: String,
    /// `{"entry_id", "vector"}` lines for the precomputed vectorizer.
    pub index_vectors: Option<PathBuf>,
    /// `{"id", "k", "vector"}` lines for the precomputed vectorizer.
    pub query_vectors: Option<PathBuf>,
    pub same_policy_only: bool,
    pub client: ClientConfig,
    pub replay_store: Option<PathBuf>,
    /// Cut oracle rollouts to this many steps.
    pub oracle_horizon: Option<usize>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            kind: PredictorKind::default(),
            t_edge: 1,
            max_len: None,
            percentile: 99.0,
            graphs: None,
            prompt: PromptSpec::default(),
            vectorizer: HASHED_TFIDF.into(),
            index_vectors: None,
            query_vectors: None,
            same_policy_only: false,
            client: ClientConfig::default(),
            replay_store: None,
            oracle_horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// `all`, `start`, or a JSON file mapping dialogue ids to action ordinals.
    pub splits: String,
    /// Score only the first `N` predicted and true steps.
    pub horizon: Option<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            splits: "all".into(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out: Option<PathBuf>,
    pub per_example: Option<PathBuf>,
    pub per_conversation: Option<PathBuf>,
    pub dot: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path).invalid(format!("reading {}", path.display()))?;
        serde_json::from_str(&text).invalid(format!("parsing config {}", path.display()))
    }

    pub fn http_client(&self) -> HttpClientConfig {
        let c = &self.predictor.client;
        HttpClientConfig {
            url: c
                .url
                .clone()
                .or_else(|| std::env::var(URL_VAR).ok())
                .unwrap_or_default(),
            model: c.model.clone(),
            api_key: std::env::var(KEY_VAR).ok(),
            temperature: self.predictor.prompt.temperature,
            seed: self.seed,
            max_attempts: c.max_attempts,
            initial_backoff_ms: c.initial_backoff_ms,
            max_in_flight: c.max_in_flight,
            timeout_secs: c.timeout_secs,
        }
    }
}

/// Options shared by every command that builds a predictor. Each flag
/// overrides the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus (graphs, retrieval index)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Evaluation corpus [default: the training corpus]
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Corpus format [default: jsonl-v1]
    #[arg(long)]
    pub format: Option<String>,
    /// Predictor [default: traversal]
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Minimum transition count for a graph edge [default: 1]
    #[arg(long)]
    pub t_edge: Option<u64>,
    /// Maximum predicted sequence length [default: from --percentile]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Percentile of training workflow lengths used as max length [default: 99]
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Prebuilt graph set (JSON from build-graph)
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    /// Retrieved examples per prompt [default: 5]
    #[arg(long = "k")]
    pub k: Option<usize>,
    /// Sampled rollouts per prediction [default: 20]
    #[arg(long)]
    pub rollouts: Option<usize>,
    /// Sampling temperature [default: 1.0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Context used for retrieval [default: utterances+actions]
    #[arg(long)]
    pub retrieval_features: Option<FeatureMode>,
    /// Context shown in prompts [default: utterances+actions]
    #[arg(long)]
    pub prediction_features: Option<FeatureMode>,
    /// Retrieval vectorizer: hashed-tfidf or precomputed [default: hashed-tfidf]
    #[arg(long)]
    pub vectorizer: Option<String>,
    /// Precomputed index vectors (JSONL)
    #[arg(long)]
    pub index_vectors: Option<PathBuf>,
    /// Precomputed query vectors (JSONL)
    #[arg(long)]
    pub query_vectors: Option<PathBuf>,
    /// Retrieve only examples from the test dialogue's policy
    #[arg(long)]
    pub same_policy_only: bool,
    /// Completion client [default: echo-stub]
    #[arg(long, value_enum)]
    pub client: Option<ClientKind>,
    /// Completion endpoint URL [env: AST_COMPLETION_URL]
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint
    #[arg(long)]
    pub model: Option<String>,
    /// Rollout store (JSONL) for the replay predictor
    #[arg(long)]
    pub replay_store: Option<PathBuf>,
    /// Cut oracle rollouts to this many steps
    #[arg(long)]
    pub oracle_horizon: Option<usize>,
    /// Seed forwarded to the completion endpoint
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> CmdResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    cfg.$($field)+ = v.into();
                }
            };
        }
        set!(self.corpus => dataset.train);
        set!(self.test => dataset.test);
        set!(self.format => dataset.format);
        set!(self.predictor => predictor.kind);
        set!(self.t_edge => predictor.t_edge);
        set!(self.max_len => predictor.max_len);
        set!(self.percentile => predictor.percentile);
        set!(self.graphs => predictor.graphs);
        set!(self.k => predictor.prompt.k);
        set!(self.rollouts => predictor.prompt.rollouts);
        set!(self.temperature => predictor.prompt.temperature);
        set!(self.retrieval_features => predictor.prompt.retrieval_features);
        set!(self.prediction_features => predictor.prompt.prediction_features);
        set!(self.vectorizer => predictor.vectorizer);
        set!(self.index_vectors => predictor.index_vectors);
        set!(self.query_vectors => predictor.query_vectors);
        set!(self.client => predictor.client.kind);
        set!(self.endpoint => predictor.client.url);
        set!(self.model => predictor.client.model);
        set!(self.replay_store => predictor.replay_store);
        set!(self.oracle_horizon => predictor.oracle_horizon);
        set!(self.seed => seed);
        set!(self.jobs => jobs);
        if self.same_policy_only {
            cfg.predictor.same_policy_only = true;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.predictor.t_edge, 1);
        assert_eq!(cfg.predictor.prompt.rollouts, 20);
        assert_eq!(cfg.predictor.prompt.k, 5);
        assert_eq!(cfg.predictor.percentile, 99.0);
        assert_eq!(cfg.predictor.kind, PredictorKind::Traversal);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"predictor": {"kind": "in-context", "prompt": {"k": 3}}}"#)
                .unwrap();
        assert_eq!(cfg.predictor.kind, PredictorKind::InContext);
        assert_eq!(cfg.predictor.prompt.k, 3);
        assert_eq!(cfg.predictor.prompt.rollouts, 20);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"predictor": {"t_egde": 2}}"#).is_err());
    }

    #[test]
    fn flags_override_config() {
        let args = RunArgs {
            t_edge: Some(3),
            k: Some(2),
            same_policy_only: true,
            ..RunArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.predictor.t_edge, 3);
        assert_eq!(cfg.predictor.prompt.k, 2);
        assert!(cfg.predictor.same_policy_only);
        assert_eq!(cfg.predictor.prompt.rollouts, 20);
    }
}
