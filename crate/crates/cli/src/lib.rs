//! The `trialrec` command line: one subcommand per pipeline stage.
//!
//! Stages talk only through files. Every artifact gets an effective-config
//! JSON beside it (`<file>.config.json`, or `effective_config.json` inside an
//! output directory) recording the resolved arguments.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use trialrec::eval::{evaluate_split_with, EvalMode, DEFAULT_KS};
use trialrec::inductive::{evaluate_blind_set, TextIndexScope, WeightMode, DEFAULT_KNN_K};
use trialrec::ingest::{
    build_graph, collect_entity_texts, generate_with, normalize_entity_texts, parse_trial_record, passes_filters, read_jsonl, read_strata,
    trial_strata, training_texts, write_jsonl, write_strata, NormalizationTable, SynthConfig, TrialRecord, STRATA_FILE,
};
use trialrec::kg::{read_node_manifest, KnowledgeGraph, NodeType, NODES_FILE};
use trialrec::kge::{split_triples, train_kge, KgeModel, ModelKind, SplitRatios, TrainConfig, TripleSplit};
use trialrec::snapshot::{load_snapshot, SnapshotPaths};
use trialrec::text::{train_text_space, TextSpace, TextSpaceParams};
use trialrec_service::{recommend_response, AppState, RecommendRequest};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<trialrec::Error> for CliError {
    fn from(e: trialrec::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<trialrec_service::ApiError> for CliError {
    fn from(e: trialrec_service::ApiError) -> Self {
        if e.status < 500 {
            CliError::Validation(e.message)
        } else {
            CliError::Data(e.message)
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "trialrec", version, about = "Clinical-trial knowledge graph and design-element recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse raw trial records and keep interventional drug trials.
    Ingest(IngestArgs),
    /// Generate a synthetic trial corpus.
    Synth(SynthArgs),
    /// Cluster near-duplicate element texts in the text space.
    Normalize(NormalizeArgs),
    /// Build the knowledge graph from a corpus.
    BuildGraph(BuildGraphArgs),
    /// Node and edge counts of a graph.
    Stats(StatsArgs),
    /// Train the subword text space on a corpus.
    TrainText(TrainTextArgs),
    /// Train a KG embedding model.
    TrainKge(TrainKgeArgs),
    /// Stratified train/valid/test split of a graph's triples.
    Split(SplitArgs),
    /// Filtered link-prediction evaluation.
    Eval(EvalArgs),
    /// Recommend design elements for a draft trial title.
    Recommend(RecommendArgs),
    /// Blind-set recommendation evaluation.
    EvalRec(EvalRecArgs),
    /// Serve recommendations over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Overwrite existing outputs.
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
    /// Run single-threaded.
    #[arg(long)]
    pub deterministic: bool,
    /// JSON object of flag values, applied before the command line.
    #[arg(long, value_name = "JSON")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct IngestArgs {
    /// JSONL file, or a directory of one-record *.json files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub first_id: u32,
    /// Tie each trial's single primary endpoint to a measure named in its title.
    #[arg(long)]
    pub forced_structure: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub text_space: PathBuf,
    #[arg(long, default_value_t = trialrec::ingest::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Normalization table from `normalize`; exact matching when absent.
    #[arg(long)]
    pub normalization: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainTextArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub min_n: usize,
    #[arg(long, default_value_t = 6)]
    pub max_n: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f32,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long, default_value_t = 1 << 18)]
    pub buckets: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainKgeArgs {
    #[arg(long, value_parser = parse_from_str::<ModelKind>)]
    pub model: ModelKind,
    #[arg(long)]
    pub graph: PathBuf,
    /// Train on the split's training triples instead of the whole graph.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Defaults to `models/<model>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub walks_per_node: usize,
    #[arg(long, default_value_t = 80)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.80)]
    pub train: f64,
    #[arg(long, default_value_t = 0.05)]
    pub valid: f64,
    #[arg(long, default_value_t = 0.15)]
    pub test: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_bundle: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Defaults to the graph the split was made from.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value = "set_aside", value_parser = parse_from_str::<EvalMode>)]
    pub mode: EvalMode,
    /// Comma-separated Hits@k cutoffs.
    #[arg(long, default_value = "1,3,10", value_parser = parse_ks)]
    pub ks: Ks,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ranks_csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SnapshotArgs {
    #[arg(long, env = "TRIALREC_MODEL_BUNDLE")]
    pub model_bundle: PathBuf,
    /// Graph directory holding the node manifest.
    #[arg(long, env = "TRIALREC_GRAPH")]
    pub graph: PathBuf,
    #[arg(long, env = "TRIALREC_TEXT_SPACE")]
    pub text_space: PathBuf,
    #[arg(long, default_value = "same_type", value_parser = parse_from_str::<TextIndexScope>)]
    pub text_scope: TextIndexScope,
}

impl SnapshotArgs {
    fn paths(&self) -> SnapshotPaths {
        SnapshotPaths {
            model_bundle: self.model_bundle.clone(),
            node_manifest: self.graph.join(NODES_FILE),
            text_space: self.text_space.clone(),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RecommendArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub snapshot: SnapshotArgs,
    #[arg(long)]
    pub title: String,
    #[arg(long, default_value = "PEP")]
    pub element_type: String,
    /// Number of recommendations.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,
    #[arg(long, default_value = "similarity")]
    pub weight_mode: String,
    /// Write the JSON response here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalRecArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub snapshot: SnapshotArgs,
    /// JSONL corpus of held-out trials.
    #[arg(long)]
    pub blind: PathBuf,
    /// Comma-separated TYPE:TOP_N pairs.
    #[arg(long, default_value = "PEP:3", value_parser = parse_configs)]
    pub configs: RecConfigs,
    #[arg(long, default_value_t = DEFAULT_KNN_K)]
    pub knn_k: usize,
    #[arg(long, default_value = "similarity", value_parser = parse_from_str::<WeightMode>)]
    pub weight_mode: WeightMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-element records.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ServeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub snapshot: SnapshotArgs,
    #[arg(long, env = "TRIALREC_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Ks(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RecConfigs(pub Vec<(NodeType, usize)>);

fn parse_from_str<T: std::str::FromStr<Err = trialrec::Error>>(s: &str) -> Result<T, String> {
    s.replace('-', "_").parse().map_err(|e: trialrec::Error| e.to_string())
}

fn parse_ks(s: &str) -> Result<Ks, String> {
    let ks = s
        .split(',')
        .map(|k| match k.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(format!("invalid cutoff {k:?}")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ks(ks))
}

fn parse_configs(s: &str) -> Result<RecConfigs, String> {
    let configs = s
        .split(',')
        .map(|c| {
            let (t, n) = c.split_once(':').ok_or_else(|| format!("expected TYPE:TOP_N, got {c:?}"))?;
            let t: NodeType = t.trim().parse().map_err(|e: trialrec::Error| e.to_string())?;
            match n.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok((t, n)),
                _ => Err(format!("invalid top_n in {c:?}")),
            }
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(RecConfigs(configs))
}

/// Replaces `--config FILE` with the flags it holds, placed right after the
/// subcommand so that explicit flags win.
pub fn expand_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let path = it.next().ok_or_else(|| CliError::Validation("--config needs a file".into()))?;
                config = Some(PathBuf::from(path));
            }
            Some(s) if s.starts_with("--config=") => config = Some(PathBuf::from(&s["--config=".len()..])),
            _ => out.push(a),
        }
    }
    let Some(path) = config else { return Ok(out) };
    if out.len() < 2 {
        return Err(CliError::Validation("--config must follow a subcommand".into()));
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::Validation(format!("{}: expected a JSON object", path.display())));
    };
    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let values = match v {
            Value::Array(items) => items,
            v => vec![v],
        };
        for v in values {
            match v {
                Value::Bool(true) => flags.push(flag.clone().into()),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => flags.extend([flag.clone().into(), s.into()]),
                Value::Number(n) => flags.extend([flag.clone().into(), n.to_string().into()]),
                _ => return Err(CliError::Validation(format!("{}: unsupported value for {key:?}", path.display()))),
            }
        }
    }
    out.splice(2..2, flags);
    Ok(out)
}

fn command() -> clap::Command {
    Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true))
}

/// Parses and runs one invocation, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = match expand_config(argv.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_VALIDATION;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn guard(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Validation(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn config_path_for(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join(EFFECTIVE_CONFIG)
    } else {
        let mut name = output.file_name().map(OsString::from).unwrap_or_default();
        name.push(".config.json");
        output.with_file_name(name)
    }
}

#[derive(Serialize)]
struct EffectiveConfig<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a A,
}

fn effective_json<A: Serialize>(command: &str, args: &A) -> String {
    let cfg = EffectiveConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    serde_json::to_string_pretty(&cfg).expect("serializable arguments") + "\n"
}

fn write_effective_config<A: Serialize>(command: &str, args: &A, output: &Path, is_dir: bool) -> CliResult<()> {
    let path = config_path_for(output, is_dir);
    fs::write(&path, effective_json(command, args)).map_err(|e| io_err(&path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn setup(command: &str, args: &impl Serialize, common: &Common) {
    if common.deterministic {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    eprintln!("effective config:\n{}", effective_json(command, args).trim_end());
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Synth(a) => synth(&a),
        Command::Normalize(a) => normalize(&a),
        Command::BuildGraph(a) => build(&a),
        Command::Stats(a) => stats(&a),
        Command::TrainText(a) => train_text(&a),
        Command::TrainKge(a) => train(&a),
        Command::Split(a) => split(&a),
        Command::Eval(a) => eval(&a),
        Command::Recommend(a) => recommend(&a),
        Command::EvalRec(a) => eval_rec(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn read_raw_records(input: &Path) -> CliResult<Vec<TrialRecord>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| io_err(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
                parse_trial_record(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            })
            .collect()
    } else {
        Ok(read_jsonl(input)?)
    }
}

fn ingest(a: &IngestArgs) -> CliResult<()> {
    setup("ingest", a, &a.common);
    guard(&a.out, a.common.force)?;
    let raw = read_raw_records(&a.input)?;
    let total = raw.len();
    let kept: Vec<TrialRecord> = raw.into_iter().filter(passes_filters).collect();
    write_jsonl(&a.out, &kept)?;
    write_effective_config("ingest", a, &a.out, false)?;
    eprintln!("kept {} of {total} records", kept.len());
    Ok(())
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    setup("synth", a, &a.common);
    guard(&a.out, a.common.force)?;
    let records = generate_with(&SynthConfig {
        seed: a.seed,
        n_trials: a.n,
        first_id: a.first_id,
        forced_structure: a.forced_structure,
    });
    write_jsonl(&a.out, &records)?;
    write_effective_config("synth", a, &a.out, false)
}

fn normalize(a: &NormalizeArgs) -> CliResult<()> {
    setup("normalize", a, &a.common);
    guard(&a.out, a.common.force)?;
    let records = read_jsonl(&a.corpus)?;
    let space = TextSpace::load(&a.text_space)?;
    let table = normalize_entity_texts(&collect_entity_texts(&records), &space, a.threshold)?;
    table.write_tsv(&a.out)?;
    write_effective_config("normalize", a, &a.out, false)
}

fn build(a: &BuildGraphArgs) -> CliResult<()> {
    setup("build-graph", a, &a.common);
    guard(&a.out, a.common.force)?;
    let records = read_jsonl(&a.corpus)?;
    let table = match &a.normalization {
        Some(p) => NormalizationTable::read_tsv(p, trialrec::ingest::DEFAULT_THRESHOLD)?,
        None => NormalizationTable::exact(&collect_entity_texts(&records)),
    };
    let graph = build_graph(&records, &table)?;
    graph.write_dir(&a.out)?;
    write_strata(&a.out.join(STRATA_FILE), &trial_strata(&records))?;
    write_effective_config("build-graph", a, &a.out, true)?;
    let s = graph.stats();
    eprintln!("{} nodes, {} edges", s.total_nodes, s.total_edges);
    Ok(())
}

fn stats(a: &StatsArgs) -> CliResult<()> {
    setup("stats", a, &a.common);
    if let Some(out) = &a.out {
        guard(out, a.common.force)?;
    }
    let graph = KnowledgeGraph::read_dir(&a.graph)?;
    let json = serde_json::to_string_pretty(&graph.stats()).expect("serializable stats") + "\n";
    match &a.out {
        Some(out) => {
            write_text(out, &json)?;
            write_effective_config("stats", a, out, false)
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn train_text(a: &TrainTextArgs) -> CliResult<()> {
    setup("train-text", a, &a.common);
    guard(&a.out, a.common.force)?;
    let records = read_jsonl(&a.corpus)?;
    let params = TextSpaceParams {
        dim: a.dim,
        min_n: a.min_n,
        max_n: a.max_n,
        window: a.window,
        negatives: a.negatives,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        min_count: a.min_count,
        buckets: a.buckets,
        seed: a.seed,
    };
    let space = train_text_space(&training_texts(&records), &params)?;
    space.save(&a.out)?;
    write_effective_config("train-text", a, &a.out, false)
}

fn train(a: &TrainKgeArgs) -> CliResult<()> {
    let mut a = a.clone();
    let out = a.out.clone().unwrap_or_else(|| Path::new("models").join(a.model.name()));
    a.out = Some(out.clone());
    setup("train-kge", &a, &a.common);
    guard(&out, a.common.force)?;
    let graph = KnowledgeGraph::read_dir(&a.graph)?;
    let split = a.split.as_deref().map(TripleSplit::read_dir).transpose()?;
    let config = TrainConfig {
        kind: a.model,
        dim: a.dim,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        margin: a.margin,
        negatives: a.negatives,
        batch_size: a.batch_size,
        seed: a.seed,
        walks_per_node: a.walks_per_node,
        walk_length: a.walk_length,
        p: a.p,
        q: a.q,
        window: a.window,
    };
    let model = train_kge(&graph, split.as_ref(), &config)?;
    model.save(&out)?;
    write_effective_config("train-kge", &a, &out, true)?;
    if let Some(last) = model.loss_trace().last() {
        eprintln!("final loss {last}");
    }
    Ok(())
}

fn split(a: &SplitArgs) -> CliResult<()> {
    setup("split", a, &a.common);
    guard(&a.out, a.common.force)?;
    let ratios = SplitRatios {
        train: a.train,
        valid: a.valid,
        test: a.test,
    };
    ratios.validate()?;
    let graph = KnowledgeGraph::read_dir(&a.graph)?;
    let strata_path = a.graph.join(STRATA_FILE);
    let strata = if strata_path.exists() { read_strata(&strata_path)? } else { BTreeMap::new() };
    let s = split_triples(&graph, ratios, &strata, a.seed)?;
    s.write_dir(&a.out)?;
    write_effective_config("split", a, &a.out, true)?;
    eprintln!("train {} / valid {} / test {}", s.train.len(), s.valid.len(), s.test.len());
    Ok(())
}

/// The graph recorded in a split's effective config.
fn split_graph(split_dir: &Path) -> CliResult<PathBuf> {
    let path = split_dir.join(EFFECTIVE_CONFIG);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("no --graph given and {} is unreadable: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    v["args"]["graph"]
        .as_str()
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Data(format!("{}: no args.graph entry", path.display())))
}

fn load_graph_model(bundle: &Path, graph_dir: &Path) -> CliResult<(KnowledgeGraph, KgeModel)> {
    let graph = KnowledgeGraph::read_dir(graph_dir)?;
    let nodes = read_node_manifest(&graph_dir.join(NODES_FILE))?;
    let model = KgeModel::load(bundle, nodes.into_iter().map(|n| (n.id, n.node_type)))?;
    Ok((graph, model))
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let mut a = a.clone();
    if a.graph.is_none() {
        a.graph = Some(split_graph(&a.split)?);
    }
    setup("eval", &a, &a.common);
    for p in a.out.iter().chain(&a.ranks_csv) {
        guard(p, a.common.force)?;
    }
    let graph_dir = a.graph.clone().expect("resolved above");
    let (graph, model) = load_graph_model(&a.model_bundle, &graph_dir)?;
    let split = TripleSplit::read_dir(&a.split)?;
    let ks = if a.ks.0.is_empty() { DEFAULT_KS.to_vec() } else { a.ks.0.clone() };
    let report = evaluate_split_with(&model, &graph, &split, a.mode, &ks)?;
    let json = report.to_json() + "\n";
    match &a.out {
        Some(out) => {
            write_text(out, &json)?;
            write_effective_config("eval", &a, out, false)?;
        }
        None => print!("{json}"),
    }
    if let Some(csv) = &a.ranks_csv {
        report.write_ranks_csv(csv)?;
        write_effective_config("eval", &a, csv, false)?;
    }
    Ok(())
}

fn recommend(a: &RecommendArgs) -> CliResult<()> {
    setup("recommend", a, &a.common);
    if let Some(out) = &a.out {
        guard(out, a.common.force)?;
    }
    let req = RecommendRequest {
        title: a.title.clone(),
        element_type: a.element_type.clone(),
        k: a.k,
        knn_k: Some(a.knn_k),
        weight_mode: Some(a.weight_mode.clone()),
    };
    req.to_query()?;
    let snap = load_snapshot(&a.snapshot.paths(), a.snapshot.text_scope)?;
    let resp = recommend_response(&snap, &req)?;
    let json = serde_json::to_string_pretty(&resp).expect("serializable response") + "\n";
    match &a.out {
        Some(out) => {
            write_text(out, &json)?;
            write_effective_config("recommend", a, out, false)
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn eval_rec(a: &EvalRecArgs) -> CliResult<()> {
    setup("eval-rec", a, &a.common);
    for p in std::iter::once(&a.out).chain(&a.csv) {
        guard(p, a.common.force)?;
    }
    if a.knn_k == 0 {
        return Err(CliError::Validation("knn_k must be at least 1".into()));
    }
    let blind = read_jsonl(&a.blind)?;
    let snap = load_snapshot(&a.snapshot.paths(), a.snapshot.text_scope)?;
    let report = evaluate_blind_set(&blind, &snap.recommender, &a.configs.0, a.knn_k, a.weight_mode)?;
    write_text(&a.out, &(report.to_json() + "\n"))?;
    write_effective_config("eval-rec", a, &a.out, false)?;
    if let Some(csv) = &a.csv {
        report.write_csv(csv)?;
        write_effective_config("eval-rec", a, csv, false)?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    setup("serve", a, &a.common);
    let state = Arc::new(AppState::default());
    let id = state.reload(&a.snapshot.paths(), a.snapshot.text_scope)?;
    eprintln!("snapshot {id} listening on {}", a.addr);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    rt.block_on(trialrec_service::serve(a.addr, state))
        .map_err(|e| CliError::Data(format!("{}: {e}", a.addr)))
}
