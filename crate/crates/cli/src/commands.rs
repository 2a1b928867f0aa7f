use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use multistep_ast::corpus::{
    export_stat_targets, format_action_sequence, load_corpus, read_corpus_lenient, render_context,
    split_at_action, write_corpus, CorpusFormat, StatTargets,
};
use multistep_ast::graph::{build_policy_graphs, sequence_length_percentile};
use multistep_ast::metrics::{evaluate_dataset, EvalOptions, SplitPolicy};
use multistep_ast::predictors::{
    load_query_vector_file, load_vector_file, CompletionClient, EchoStubClient,
    HttpCompletionClient, InContextPredictor, ReplayPredictor, ReplayStore, RetrievalIndex,
    TraversalPredictor, PRECOMPUTED,
};
use multistep_ast::simulator::{
    format_table, run_simulation, write_records_csv, Approval, Averaging, Mode, SimulationConfig,
};
use multistep_ast::{Dialogue, PolicyGraphSet, Predictor};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ClientKind, PredictorKind, RunArgs, RunConfig};
use crate::error::{write_atomic, CmdResult, Context, Failure};

fn load(path: &Path, format: &str) -> CmdResult<Vec<Dialogue>> {
    let format: CorpusFormat = format.parse().invalid("corpus format")?;
    load_corpus(path, format).invalid(format!("loading {}", path.display()))
}

struct Corpora {
    train: Option<Vec<Dialogue>>,
    test: Vec<Dialogue>,
}

fn load_corpora(cfg: &RunConfig) -> CmdResult<Corpora> {
    let ds = &cfg.dataset;
    let train = ds
        .train
        .as_deref()
        .map(|p| load(p, &ds.format))
        .transpose()?;
    let test = match (&ds.test, &train) {
        (Some(p), _) => load(p, &ds.format)?,
        (None, Some(t)) => t.clone(),
        (None, None) => return Err(Failure::invalid("no corpus given (use --corpus or --test)")),
    };
    Ok(Corpora { train, test })
}

fn resolve_max_len(cfg: &RunConfig, dialogues: &[Dialogue]) -> CmdResult<usize> {
    match cfg.predictor.max_len {
        Some(0) => Err(Failure::invalid("max_len must be at least 1")),
        Some(n) => Ok(n),
        None => sequence_length_percentile(dialogues, cfg.predictor.percentile)
            .invalid("deriving max_len from workflow lengths"),
    }
}

fn build_predictor(cfg: &RunConfig, corpora: &Corpora) -> CmdResult<Box<dyn Predictor>> {
    let p = &cfg.predictor;
    let train = || {
        corpora.train.as_deref().ok_or_else(|| {
            Failure::invalid(format!(
                "the {:?} predictor needs a training corpus (--corpus)",
                p.kind
            ))
        })
    };
    Ok(match p.kind {
        PredictorKind::Traversal => {
            let graphs = match &p.graphs {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .invalid(format!("reading {}", path.display()))?;
                    serde_json::from_str::<PolicyGraphSet>(&text)
                        .invalid(format!("parsing graphs {}", path.display()))?
                }
                None => {
                    let train = train()?;
                    build_policy_graphs(train, p.t_edge, resolve_max_len(cfg, train)?)
                        .invalid("building policy graphs")?
                }
            };
            Box::new(TraversalPredictor::new(graphs))
        }
        PredictorKind::InContext => {
            let train = train()?;
            let features = p.prompt.retrieval_features;
            let (index, queries) = if p.vectorizer == PRECOMPUTED {
                let (Some(iv), Some(qv)) = (&p.index_vectors, &p.query_vectors) else {
                    return Err(Failure::invalid(
                        "the precomputed vectorizer needs index_vectors and query_vectors",
                    ));
                };
                let vectors = load_vector_file(iv).invalid("loading index vectors")?;
                let index = RetrievalIndex::with_vectors(train, features, vectors)
                    .invalid("building retrieval index")?;
                (
                    index,
                    load_query_vector_file(qv).invalid("loading query vectors")?,
                )
            } else {
                let index = RetrievalIndex::build(train, features, &p.vectorizer)
                    .invalid("building retrieval index")?;
                (index, Default::default())
            };
            let client: Arc<dyn CompletionClient> = match p.client.kind {
                ClientKind::EchoStub => Arc::new(EchoStubClient),
                ClientKind::Http => {
                    let http = cfg.http_client();
                    if http.url.is_empty() {
                        return Err(Failure::invalid(format!(
                            "the http client needs an endpoint (--endpoint or {})",
                            crate::config::URL_VAR
                        )));
                    }
                    Arc::new(HttpCompletionClient::new(http).runtime("starting http client")?)
                }
            };
            let max_len = resolve_max_len(cfg, train)?;
            Box::new(
                InContextPredictor::new(p.prompt.clone(), index, client, max_len)
                    .same_policy_only(p.same_policy_only)
                    .with_query_vectors(queries),
            )
        }
        PredictorKind::Replay => {
            let path = p
                .replay_store
                .as_ref()
                .ok_or_else(|| Failure::invalid("the replay predictor needs --replay-store"))?;
            let store = ReplayStore::load(path).invalid(format!("loading {}", path.display()))?;
            let basis = corpora.train.as_deref().unwrap_or(&corpora.test);
            Box::new(ReplayPredictor::new(store, resolve_max_len(cfg, basis)?))
        }
        PredictorKind::Oracle => {
            let store = ReplayStore::from_ground_truth(&corpora.test, p.oracle_horizon);
            // never cut the ground truth short
            let longest = corpora
                .test
                .iter()
                .map(Dialogue::action_count)
                .max()
                .unwrap_or(0);
            Box::new(ReplayPredictor::new(store, longest.max(1)))
        }
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CmdResult<T> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .runtime("starting worker pool")?
            .install(f)),
        None => Ok(f()),
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CmdResult<()> {
    let write = |w: &mut dyn Write| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    };
    match path {
        Some(p) => write_atomic(p, write),
        None => write(&mut std::io::stdout().lock()).runtime("writing stdout"),
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus to validate
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the validated corpus
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Corpus format
    #[arg(long, default_value = "jsonl-v1")]
    pub format: String,
}

pub fn ingest(args: &IngestArgs) -> CmdResult<()> {
    let _: CorpusFormat = args.format.parse().invalid("corpus format")?;
    let file =
        std::fs::File::open(&args.input).invalid(format!("opening {}", args.input.display()))?;
    let (dialogues, errors) = read_corpus_lenient(std::io::BufReader::new(file))
        .invalid(format!("reading {}", args.input.display()))?;
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("{e}");
        }
        return Err(Failure::invalid(format!(
            "{} invalid line(s) in {}",
            errors.len(),
            args.input.display()
        )));
    }
    if let Some(out) = &args.output {
        write_atomic(out, |w| write_corpus(w, &dialogues))?;
    }

    let vocab: BTreeSet<&str> = dialogues
        .iter()
        .flat_map(|d| d.workflow().map(|a| a.name.as_str()))
        .collect();
    let policies: BTreeSet<&str> = dialogues.iter().map(|d| d.policy.as_str()).collect();
    println!("dialogues        {}", dialogues.len());
    println!("policies         {}", policies.len());
    println!(
        "turns            {}",
        dialogues.iter().map(|d| d.turns.len()).sum::<usize>()
    );
    println!("unique actions   {}", vocab.len());
    let pct = |q| sequence_length_percentile(&dialogues, q).map_or("n/a".into(), |n| n.to_string());
    println!(
        "workflow length  p50={} p90={} p99={} max={}",
        pct(50.0),
        pct(90.0),
        pct(99.0),
        pct(100.0)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// JSON run config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus format [default: jsonl-v1]
    #[arg(long)]
    pub format: Option<String>,
    /// Minimum transition count for a graph edge [default: 1]
    #[arg(long)]
    pub t_edge: Option<u64>,
    /// Maximum predicted sequence length [default: from --percentile]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Percentile of workflow lengths used as max length [default: 99]
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Graph set JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write Graphviz text here
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

pub fn build_graph(args: &BuildGraphArgs) -> CmdResult<()> {
    let run = RunArgs {
        config: args.config.clone(),
        corpus: args.corpus.clone(),
        format: args.format.clone(),
        t_edge: args.t_edge,
        max_len: args.max_len,
        percentile: args.percentile,
        ..RunArgs::default()
    };
    let cfg = run.resolve()?;
    let path = cfg
        .dataset
        .train
        .as_deref()
        .ok_or_else(|| Failure::invalid("no corpus given (use --corpus)"))?;
    let dialogues = load(path, &cfg.dataset.format)?;
    let max_len = resolve_max_len(&cfg, &dialogues)?;
    let set = build_policy_graphs(&dialogues, cfg.predictor.t_edge, max_len)
        .invalid("building policy graphs")?;
    write_json(args.out.as_deref().or(cfg.output.out.as_deref()), &set)?;
    if let Some(dot) = args.dot.as_deref().or(cfg.output.dot.as_deref()) {
        write_atomic(dot, |w| w.write_all(set.to_dot().as_bytes()))?;
    }
    Ok(())
}

fn split_policy(spec: &str) -> CmdResult<SplitPolicy> {
    Ok(match spec {
        "all" => SplitPolicy::All,
        "start" => SplitPolicy::Start,
        path => {
            let text =
                std::fs::read_to_string(path).invalid(format!("reading split file {path}"))?;
            let map: BTreeMap<String, Vec<usize>> =
                serde_json::from_str(&text).invalid(format!("parsing split file {path}"))?;
            SplitPolicy::Explicit(map)
        }
    })
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Split points: all, start, or a JSON file of {id: [k, ...]} [default: all]
    #[arg(long)]
    pub splits: Option<String>,
    /// Score only the first N predicted and true steps
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Report JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-example metrics CSV
    #[arg(long)]
    pub per_example: Option<PathBuf>,
}

pub fn evaluate(args: &EvaluateArgs) -> CmdResult<()> {
    let mut cfg = args.run.resolve()?;
    if let Some(s) = &args.splits {
        cfg.metrics.splits = s.clone();
    }
    if args.horizon.is_some() {
        cfg.metrics.horizon = args.horizon;
    }
    if cfg.metrics.horizon == Some(0) {
        return Err(Failure::invalid("horizon must be at least 1"));
    }
    let corpora = load_corpora(&cfg)?;
    let predictor = build_predictor(&cfg, &corpora)?;
    let splits = split_policy(&cfg.metrics.splits)?;
    let options = EvalOptions {
        horizon: cfg.metrics.horizon,
        jobs: cfg.jobs,
    };
    let report = evaluate_dataset(predictor.as_ref(), &corpora.test, &splits, &options)
        .invalid("selecting split points")?;
    write_json(args.out.as_deref().or(cfg.output.out.as_deref()), &report)?;
    if let Some(csv) = args
        .per_example
        .as_deref()
        .or(cfg.output.per_example.as_deref())
    {
        write_atomic(csv, |w| report.write_csv(w))?;
    }
    eprintln!(
        "evaluated {} split(s), {} failed",
        report.count, report.failures
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    OneStep,
    MultiStep,
    Both,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Which simulations to run; both prints a comparison table
    #[arg(long, value_enum, default_value_t = SimMode::Both)]
    pub mode: SimMode,
    /// Approve suggestions on action names alone
    #[arg(long)]
    pub action_only: bool,
    /// Pool counts over conversations instead of averaging their ratios
    #[arg(long)]
    pub micro: bool,
    /// Report JSON (the table always goes to stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-conversation CSV
    #[arg(long)]
    pub per_conversation: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs) -> CmdResult<()> {
    let cfg = args.run.resolve()?;
    let corpora = load_corpora(&cfg)?;
    let predictor = build_predictor(&cfg, &corpora)?;
    let modes: &[Mode] = match args.mode {
        SimMode::OneStep => &[Mode::OneStep],
        SimMode::MultiStep => &[Mode::MultiStep],
        SimMode::Both => &[Mode::OneStep, Mode::MultiStep],
    };
    let mut reports = Vec::new();
    for &mode in modes {
        let sim = SimulationConfig {
            mode,
            approval: if args.action_only {
                Approval::ActionOnly
            } else {
                Approval::Joint
            },
            averaging: if args.micro {
                Averaging::Micro
            } else {
                Averaging::Macro
            },
            jobs: cfg.jobs,
        };
        reports
            .push(run_simulation(&sim, predictor.as_ref(), &corpora.test).runtime("simulation")?);
    }
    let refs: Vec<_> = reports.iter().collect();
    print!("{}", format_table(&refs));
    #[derive(Serialize)]
    struct Out<'a> {
        reports: &'a [multistep_ast::simulator::SimulationReport],
    }
    if let Some(out) = args.out.as_deref().or(cfg.output.out.as_deref()) {
        write_json(Some(out), &Out { reports: &reports })?;
    }
    if let Some(csv) = args
        .per_conversation
        .as_deref()
        .or(cfg.output.per_conversation.as_deref())
    {
        write_atomic(csv, |w| write_records_csv(&refs, w))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Predicted,
    Oracle,
}

#[derive(Debug, Args)]
pub struct ExportFeaturesArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Where the future-action features come from
    #[arg(long, value_enum, default_value_t = FeatureSource::Predicted)]
    pub features: FeatureSource,
    /// Keep only the first N feature actions
    #[arg(long)]
    pub max_actions: Option<usize>,
    /// Feature JSONL [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FeatureRecord {
    id: String,
    policy: String,
    k: usize,
    source: FeatureSource,
    context: String,
    action_features: Vec<String>,
    action_features_first2: Vec<String>,
    ground_truth_actions: Vec<String>,
    targets: StatTargets,
}

pub fn export_features(args: &ExportFeaturesArgs) -> CmdResult<()> {
    let cfg = args.run.resolve()?;
    let corpora = load_corpora(&cfg)?;
    let predictor = match args.features {
        FeatureSource::Predicted => Some(build_predictor(&cfg, &corpora)?),
        FeatureSource::Oracle => None,
    };
    let mode = cfg.predictor.prompt.prediction_features;
    let points: Vec<(&Dialogue, usize)> = corpora
        .test
        .iter()
        .flat_map(|d| (0..=d.action_count()).map(move |k| (d, k)))
        .collect();
    let records = with_pool(cfg.jobs, || {
        points
            .par_iter()
            .map(|&(d, k)| {
                let split = split_at_action(d, k).expect("k within action count");
                let mut features = match &predictor {
                    Some(p) => p
                        .predict(&split)
                        .map_err(|e| format!("{} at k={k}: {e}", d.id))?
                        .top1_sequence(),
                    None => split.future_actions.clone(),
                };
                if let Some(n) = args.max_actions {
                    features.truncate(n);
                }
                let show = |steps: &[multistep_ast::ActionStep]| {
                    steps.iter().map(ToString::to_string).collect::<Vec<_>>()
                };
                Ok(FeatureRecord {
                    id: d.id.clone(),
                    policy: d.policy.clone(),
                    k,
                    source: args.features,
                    context: render_context(&split.context, mode),
                    action_features_first2: show(&features[..features.len().min(2)]),
                    action_features: show(&features),
                    ground_truth_actions: show(&split.future_actions),
                    targets: export_stat_targets(d, k).expect("k within action count"),
                })
            })
            .collect::<Result<Vec<_>, String>>()
    })?
    .map_err(|e| Failure::Runtime(anyhow::anyhow!("prediction failed for {e}")))?;

    let write = |w: &mut dyn Write| {
        for r in &records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    };
    match args.out.as_deref().or(cfg.output.out.as_deref()) {
        Some(p) => write_atomic(p, write),
        None => write(&mut std::io::stdout().lock()).runtime("writing stdout"),
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dialogue id in the evaluation corpus
    #[arg(long)]
    pub dialogue: String,
    /// Predict after this many actions [default: all of them]
    #[arg(long)]
    pub after: Option<usize>,
    /// Also write the predicted graph as Graphviz text here
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

pub fn predict(args: &PredictArgs) -> CmdResult<()> {
    let cfg = args.run.resolve()?;
    let corpora = load_corpora(&cfg)?;
    let d = corpora
        .test
        .iter()
        .find(|d| d.id == args.dialogue)
        .ok_or_else(|| {
            Failure::invalid(format!("no dialogue {:?} in the corpus", args.dialogue))
        })?;
    let split = split_at_action(d, args.after.unwrap_or(d.action_count()))
        .invalid("choosing the context")?;
    let predictor = build_predictor(&cfg, &corpora)?;
    let graph = predictor.predict(&split).runtime("prediction")?;

    #[derive(Serialize)]
    struct Out<'a> {
        id: &'a str,
        k: usize,
        top1: String,
        graph: &'a multistep_ast::PredictionGraph,
    }
    write_json(
        None,
        &Out {
            id: &d.id,
            k: split.k,
            top1: format_action_sequence(&graph.top1_sequence()),
            graph: &graph,
        },
    )?;
    if let Some(dot) = &args.dot {
        write_atomic(dot, |w| w.write_all(graph.to_dot(&d.id).as_bytes()))?;
    }
    Ok(())
}
