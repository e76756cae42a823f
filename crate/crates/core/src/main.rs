use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use kgcoder::entropy::{corpus_entropy_report, PoolingMode};
use kgcoder::ingest::{load_corpus, Corpus, Split};
use kgcoder::kg::{
    ablate_all_filters, export_dot, filter_triples, graph_stats, read_graph_archive,
    write_graph_archive, AblationFilter, EntityType, PatientGraph, RelationFamily,
};
use kgcoder::manifest::RunManifest;
use kgcoder::model::{
    parse_layer_plan, EncoderConfig, ForwardOptions, Model, ModelParams, Vocabulary,
};
use kgcoder::numerics::{read_checkpoint, write_checkpoint};
use kgcoder::train::{evaluate, train, TrainConfig};

#[derive(Parser)]
#[command(name = "kgcoder", version, about = "Patient knowledge-graph coding pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// JSON-lines documents file ({doc_id, text}).
    #[arg(long)]
    docs: PathBuf,
    /// JSON-lines labels file ({doc_id, codes}).
    #[arg(long)]
    labels: PathBuf,
    /// JSON-lines split assignments ({doc_id, split}).
    #[arg(long)]
    splits: PathBuf,
    /// JSON-lines relation-extraction triples.
    #[arg(long)]
    triples: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-document knowledge graphs and write a JSON-lines archive.
    BuildGraphs {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Output directory (graphs.jsonl, graph_stats.txt, manifest.json).
        #[arg(long)]
        out: PathBuf,
        /// remove-family=CR|TE|PR|BD|BP or remove-entity=TYPE; repeatable.
        #[arg(long = "filter")]
        filters: Vec<String>,
    },
    /// Entropy retention report for graphs against the source text.
    Entropy {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Optional prebuilt graph archive; rebuilt from triples if absent.
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Emit the full nine-row ablation sweep.
        #[arg(long)]
        ablate_all: bool,
        /// Extra single filters to report; repeatable.
        #[arg(long = "filter")]
        filters: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dual-branch coder.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Optional prebuilt graph archive; rebuilt from triples if absent.
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// TOML or JSON config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config file seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        graphs: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train | dev | test
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Zero the graph branch (fidelity probe).
        #[arg(long)]
        ablate_graph: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export each graph in an archive as a Graphviz DOT file.
    ExportDot {
        /// Graph archive from build-graphs.
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Configuration file schema; field names follow the training-hyperparameter
/// table conventions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    embedding_dim: usize,
    dgcnn_layers: String,
    chunk_length: usize,
    max_length: usize,
    self_loops: bool,
    epochs: usize,
    learning_rate: f64,
    warmup_steps: usize,
    batch_size: usize,
    grad_accumulation_steps: usize,
    seed: u64,
    threshold: f64,
    k: usize,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            embedding_dim: 768,
            dgcnn_layers: "384-384".into(),
            chunk_length: 512,
            max_length: 5120,
            self_loops: true,
            epochs: 20,
            learning_rate: 1e-3,
            warmup_steps: 2000,
            batch_size: 1,
            grad_accumulation_steps: 1,
            seed: 42,
            threshold: 0.5,
            k: 8,
        }
    }
}

enum CliError {
    /// Bad inputs or configuration: exit code 2.
    Usage(String),
    /// Failure while executing a validated run: exit code 1.
    Runtime(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

fn parse_filters(raw: &[String]) -> Result<AblationFilter, CliError> {
    let mut filter = AblationFilter::default();
    for item in raw {
        match item.split_once('=') {
            Some(("remove-family", value)) => {
                let family = RelationFamily::parse(value).ok_or_else(|| {
                    CliError::Usage(format!("unknown relation family '{value}'"))
                })?;
                filter.removed_families.insert(family);
            }
            Some(("remove-entity", value)) => {
                filter.removed_entity_types.insert(EntityType::parse(value));
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "bad --filter '{item}': expected remove-family=X or remove-entity=Y"
                )))
            }
        }
    }
    Ok(filter)
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    } else {
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

fn encoder_config(cfg: &FileConfig, label_count: usize) -> Result<EncoderConfig, CliError> {
    let layers = parse_layer_plan(&cfg.dgcnn_layers).map_err(CliError::usage)?;
    let encoder = EncoderConfig {
        segment_length: cfg.chunk_length,
        max_len: cfg.max_length,
        text_hidden_dim: cfg.embedding_dim,
        dgcnn_layer_sizes: layers,
        node_feature_dim: cfg.embedding_dim,
        label_count,
        self_loops: cfg.self_loops,
    };
    encoder.validate().map_err(CliError::usage)?;
    Ok(encoder)
}

fn load_inputs(args: &CorpusArgs) -> Result<Corpus, CliError> {
    load_corpus(&args.docs, &args.labels, &args.triples, &args.splits).map_err(CliError::usage)
}

fn corpus_graphs(
    corpus: &Corpus,
    archive: Option<&Path>,
    filter: &AblationFilter,
) -> Result<Vec<PatientGraph>, CliError> {
    match archive {
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                CliError::Usage(format!("cannot open graph archive {}: {e}", path.display()))
            })?;
            read_graph_archive(BufReader::new(file)).map_err(CliError::usage)
        }
        None => corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, doc)| {
                let kept = filter_triples(&corpus.triples[i], filter);
                kgcoder::kg::build_graph(&doc.doc_id, &kept).map_err(CliError::runtime)
            })
            .collect(),
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn corpus_input_paths(args: &CorpusArgs) -> Vec<&Path> {
    vec![&args.docs, &args.labels, &args.splits, &args.triples]
}

fn finish_manifest(manifest: RunManifest, out: &Path) -> Result<(), CliError> {
    manifest
        .finish_and_write(&out.join("manifest.json"))
        .map_err(CliError::runtime)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildGraphs { corpus: corpus_args, out, filters } => {
            let filter = parse_filters(&filters)?;
            let corpus = load_inputs(&corpus_args)?;
            let manifest = RunManifest::begin(
                "build-graphs",
                None,
                serde_json::json!({ "filter": filter.describe() }),
                &corpus_input_paths(&corpus_args),
            )
            .map_err(CliError::usage)?;
            ensure_out_dir(&out)?;

            let graphs = corpus_graphs(&corpus, None, &filter)?;
            let archive_path = out.join("graphs.jsonl");
            let file = File::create(&archive_path).map_err(|e| {
                CliError::Runtime(format!("cannot create {}: {e}", archive_path.display()))
            })?;
            write_graph_archive(file, &graphs).map_err(CliError::runtime)?;

            let stats = graph_stats(&corpus, &graphs);
            let table = stats.render_table();
            write_text(&out.join("graph_stats.txt"), &table)?;
            print!("{table}");
            finish_manifest(manifest, &out)
        }
        Command::Entropy { corpus: corpus_args, graphs, ablate_all, filters, out } => {
            let corpus = load_inputs(&corpus_args)?;
            if corpus.is_empty() {
                return Err(CliError::Usage("corpus is empty".into()));
            }
            let manifest = RunManifest::begin(
                "entropy",
                None,
                serde_json::json!({ "ablate_all": ablate_all }),
                &corpus_input_paths(&corpus_args),
            )
            .map_err(CliError::usage)?;
            ensure_out_dir(&out)?;

            let graphs = corpus_graphs(&corpus, graphs.as_deref(), &AblationFilter::default())?;
            let mut sweep = Vec::new();
            if ablate_all {
                sweep.extend(ablate_all_filters());
            }
            let extra = parse_filters(&filters)?;
            if !extra.is_empty() {
                sweep.push(extra);
            }
            let report = corpus_entropy_report(&corpus, &graphs, &sweep, PoolingMode::Pooled)
                .map_err(CliError::runtime)?;
            let rendered = serde_json::to_string_pretty(&report).map_err(CliError::runtime)?;
            write_text(&out.join("entropy.json"), &(rendered + "\n"))?;
            let table = report.render_table();
            write_text(&out.join("entropy.txt"), &table)?;
            print!("{table}");
            finish_manifest(manifest, &out)
        }
        Command::Train { corpus: corpus_args, graphs, config, seed, out } => {
            let mut file_cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                file_cfg.seed = seed;
            }
            let corpus = load_inputs(&corpus_args)?;
            let encoder = encoder_config(&file_cfg, corpus.label_space.len())?;
            let train_cfg = TrainConfig {
                epochs: file_cfg.epochs,
                learning_rate: file_cfg.learning_rate,
                warmup_steps: file_cfg.warmup_steps,
                batch_size: file_cfg.batch_size,
                grad_accumulation_steps: file_cfg.grad_accumulation_steps,
                seed: file_cfg.seed,
                threshold: file_cfg.threshold,
                k: file_cfg.k.min(corpus.label_space.len()),
            };
            train_cfg.validate().map_err(CliError::usage)?;
            let manifest = RunManifest::begin(
                "train",
                Some(file_cfg.seed),
                serde_json::to_value(&file_cfg).map_err(CliError::runtime)?,
                &corpus_input_paths(&corpus_args),
            )
            .map_err(CliError::usage)?;
            ensure_out_dir(&out)?;

            let graphs = corpus_graphs(&corpus, graphs.as_deref(), &AblationFilter::default())?;
            let outcome = train(&corpus, &graphs, &encoder, &train_cfg, Default::default())
                .map_err(CliError::runtime)?;
            write_checkpoint(&out.join("best.ckpt"), &outcome.best_params.to_checkpoint(&encoder))
                .map_err(CliError::runtime)?;
            write_checkpoint(
                &out.join("final.ckpt"),
                &outcome.final_params.to_checkpoint(&encoder),
            )
            .map_err(CliError::runtime)?;
            write_text(&out.join("train_log.jsonl"), &outcome.log.to_jsonl())?;
            if let Some(last) = outcome.log.epochs.last() {
                println!(
                    "trained {} epochs; final loss {:.6}; best dev epoch {}",
                    last.epoch, last.train_loss, outcome.best_epoch
                );
            }
            finish_manifest(manifest, &out)
        }
        Command::Eval {
            corpus: corpus_args,
            graphs,
            checkpoint,
            split,
            k,
            threshold,
            ablate_graph,
            out,
        } => {
            let split = Split::parse(&split).map_err(CliError::usage)?;
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(CliError::Usage("threshold must lie in (0, 1)".into()));
            }
            let corpus = load_inputs(&corpus_args)?;
            if k == 0 || k > corpus.label_space.len() {
                return Err(CliError::Usage(format!(
                    "k must lie in 1..={}",
                    corpus.label_space.len()
                )));
            }
            let ckpt = read_checkpoint(&checkpoint).map_err(CliError::usage)?;
            let (encoder, params) = ModelParams::from_checkpoint(&ckpt).map_err(CliError::usage)?;
            let manifest = RunManifest::begin(
                "eval",
                None,
                serde_json::json!({
                    "checkpoint": checkpoint.display().to_string(),
                    "split": format!("{split:?}").to_lowercase(),
                    "k": k,
                    "threshold": threshold,
                    "ablate_graph": ablate_graph,
                }),
                &corpus_input_paths(&corpus_args),
            )
            .map_err(CliError::usage)?;
            ensure_out_dir(&out)?;

            let graphs = corpus_graphs(&corpus, graphs.as_deref(), &AblationFilter::default())?;
            let vocab = Vocabulary::from_corpus(&corpus, &graphs);
            if vocab.len() != params.embedding.rows() {
                return Err(CliError::Usage(format!(
                    "checkpoint embeddings cover {} tokens but the corpus vocabulary has {}",
                    params.embedding.rows(),
                    vocab.len()
                )));
            }
            let model = Model::new(encoder, params).map_err(CliError::usage)?;
            let opts = ForwardOptions { zero_graph_branch: ablate_graph };
            let report = evaluate(&model, &corpus, &graphs, &vocab, split, threshold, k, opts)
                .map_err(CliError::runtime)?;
            let rendered = serde_json::to_string_pretty(&report).map_err(CliError::runtime)?;
            write_text(&out.join("metrics.json"), &(rendered + "\n"))?;
            let table = report.render_table();
            write_text(&out.join("metrics.txt"), &table)?;
            print!("{table}");
            finish_manifest(manifest, &out)
        }
        Command::ExportDot { graphs, out } => {
            let file = File::open(&graphs).map_err(|e| {
                CliError::Usage(format!("cannot open graph archive {}: {e}", graphs.display()))
            })?;
            let parsed = read_graph_archive(BufReader::new(file)).map_err(CliError::usage)?;
            let manifest = RunManifest::begin(
                "export-dot",
                None,
                serde_json::json!({ "graphs": graphs.display().to_string() }),
                &[&graphs],
            )
            .map_err(CliError::usage)?;
            ensure_out_dir(&out)?;
            for graph in &parsed {
                write_text(&out.join(format!("{}.dot", graph.doc_id)), &export_dot(graph))?;
            }
            println!("wrote {} DOT files to {}", parsed.len(), out.display());
            finish_manifest(manifest, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(message)) => {
            let _ = writeln!(std::io::stderr(), "error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            let _ = writeln!(std::io::stderr(), "error: {message}");
            ExitCode::from(2)
        }
    }
}
