//! `hgmlm`: build metapath corpora from heterogeneous graphs and train,
//! adapt and evaluate a masked language model on them.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hgmlm::corpus::{EntryId, PrefixFormat, TaskKind};
use hgmlm::text::TextMode;

#[derive(Debug, Parser)]
#[command(name = "hgmlm", version, about, propagate_version = true)]
pub struct Cli {
    /// Seed for sampling, initialisation and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML file with `[model]`, `[train]` and `[adapt]` tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset bundle and store it as a binary graph.
    Ingest(IngestArgs),
    /// Turn a graph into a masked cloze corpus (JSON lines).
    Corpus(CorpusArgs),
    /// Build a token vocabulary from one or more corpora.
    Vocab(VocabArgs),
    /// Train a model on corpora, from scratch or from a checkpoint.
    Train(TrainArgs),
    /// Adapt a checkpoint on K labelled examples per class.
    Adapt(AdaptArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Export mask-position attention for one corpus entry.
    Attention(AttentionArgs),
    /// Run a full experiment plan.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Bundle manifest (`bundle.toml`).
    #[arg(long)]
    pub bundle: PathBuf,
    /// Binary graph to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the graph as GML.
    #[arg(long, value_name = "FILE")]
    pub gml: Option<PathBuf>,
    /// Also write the graph as GraphML.
    #[arg(long, value_name = "FILE")]
    pub graphml: Option<PathBuf>,
    /// Attribute mode used for the GML/GraphML exports.
    #[arg(long, default_value = "both")]
    pub mode: TextMode,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Binary graph from `ingest`, or a bundle manifest.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "nc,lp")]
    pub tasks: Vec<TaskKind>,
    #[arg(long, default_value = "both")]
    pub mode: TextMode,
    /// Instances sampled per metapath.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value = "metapath")]
    pub format: PrefixFormat,
    /// Negative link examples per positive one.
    #[arg(long, default_value_t = 1.0)]
    pub negative_ratio: f64,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Words seen fewer times become `<unk>`.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint to continue from; a fresh model is built otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Target corpus the shots are drawn from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Labelled examples per class; 0 copies the checkpoint.
    #[arg(long)]
    pub shots: usize,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write the ids of the entries used for adaptation here.
    #[arg(long, value_name = "FILE")]
    pub shots_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics to report: f1 and/or auc (AUC and AP for link prediction).
    #[arg(long, value_delimiter = ',', default_value = "f1,auc")]
    pub metrics: Vec<commands::Metric>,
    /// Predict over the whole vocabulary rather than the candidate labels.
    #[arg(long)]
    pub unconstrained: bool,
    /// Entry ids to leave out, e.g. the `--shots-out` file of `adapt`.
    #[arg(long, value_name = "FILE")]
    pub exclude: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Write the scores as JSON here as well as to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttentionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Hex id of the entry.
    #[arg(long)]
    pub entry: EntryId,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also print the highest-scoring tokens.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Output directory for report.json, vocab.tsv and checkpoints.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
