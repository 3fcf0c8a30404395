use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use hgmlm::corpus::{build_corpus, mask_entry, read_jsonl, write_jsonl, CorpusConfig, EntryId, MaskedEntry, TaskKind};
use hgmlm::ingest::{load_bundle_file, write_gml, write_graphml, FlatGraph};
use hgmlm::model::{export_attention, load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, TrainConfig};
use hgmlm::pipeline::{
    self, encode_examples, evaluate, initial_checkpoint, load_dataset, train_on, Example, ExperimentPlan, TaskReport,
};
use hgmlm::tokenizer::{EncodedEntry, Vocab};
use serde::{Deserialize, Serialize};

use crate::{AdaptArgs, AttentionArgs, Cli, Command, CorpusArgs, EvalArgs, IngestArgs, RunArgs, TrainArgs, VocabArgs};

/// A problem with how the program was invoked rather than with its data.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// 1 for usage errors, 3 for numeric failures, 2 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    let numeric = e
        .chain()
        .filter_map(|c| c.downcast_ref::<hgmlm::Error>())
        .any(hgmlm::Error::is_numeric);
    if numeric {
        3
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    F1,
    Auc,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    model: ModelConfig,
    train: TrainConfig,
    adapt: Option<TrainConfig>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let settings: Settings = toml::from_str(&text)
            .map_err(hgmlm::Error::from)
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(settings)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("HGMLM_THREADS") else {
        return Ok(());
    };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Usage(format!("HGMLM_THREADS must be a positive integer, got `{value}`")).into()),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    log::debug!("using {n} worker threads");
    Ok(())
}

fn show_config<T: Serialize>(command: &str, config: &T) -> Result<()> {
    let text = toml::to_string(config).context("rendering the resolved config")?;
    eprintln!("# resolved config for `{command}`\n{}", text.trim_end());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    let seed = cli.seed;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Corpus(a) => corpus(a, seed),
        Command::Vocab(a) => vocab(a),
        Command::Train(a) => train(a, seed, config),
        Command::Adapt(a) => adapt(a, seed, config),
        Command::Eval(a) => eval(a),
        Command::Attention(a) => attention(a),
        Command::Run(a) => run(a, seed, config),
    }
}

#[derive(Serialize)]
struct IngestConfig<'a> {
    bundle: &'a Path,
    out: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    gml: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    graphml: Option<&'a Path>,
    mode: String,
}

fn ingest(a: IngestArgs) -> Result<()> {
    show_config(
        "ingest",
        &IngestConfig {
            bundle: &a.bundle,
            out: &a.out,
            gml: a.gml.as_deref(),
            graphml: a.graphml.as_deref(),
            mode: a.mode.to_string(),
        },
    )?;
    let dataset = load_bundle_file(&a.bundle).with_context(|| format!("loading {}", a.bundle.display()))?;
    fs::write(&a.out, dataset.to_bytes()?).with_context(|| format!("writing {}", a.out.display()))?;
    if a.gml.is_some() || a.graphml.is_some() {
        let flat = FlatGraph::from_graph(&dataset.graph, a.mode);
        if let Some(p) = &a.gml {
            fs::write(p, write_gml(&flat))?;
        }
        if let Some(p) = &a.graphml {
            fs::write(p, write_graphml(&flat))?;
        }
    }
    println!(
        "{}: {} nodes, {} edges, {} labelled, {} metapaths",
        dataset.name,
        dataset.graph.num_nodes(),
        dataset.graph.num_edges(),
        dataset.labels.len(),
        dataset.metapaths.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct CorpusRun<'a> {
    graph: &'a Path,
    out: &'a Path,
    corpus: &'a CorpusConfig,
}

fn corpus(a: CorpusArgs, seed: Option<u64>) -> Result<()> {
    if a.tasks.is_empty() {
        return Err(Usage("--tasks needs at least one of nc, lp".into()).into());
    }
    let config = CorpusConfig {
        tasks: a.tasks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        mode: a.mode,
        format: a.format,
        k: a.k,
        negative_ratio: a.negative_ratio,
        seed: seed.unwrap_or(0),
    };
    show_config(
        "corpus",
        &CorpusRun {
            graph: &a.graph,
            out: &a.out,
            corpus: &config,
        },
    )?;
    let dataset = load_dataset(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
    let entries = build_corpus(&dataset, &config)?
        .iter()
        .map(mask_entry)
        .collect::<hgmlm::Result<Vec<_>>>()?;
    write_jsonl(&a.out, &entries).with_context(|| format!("writing {}", a.out.display()))?;
    for task in &config.tasks {
        let n = entries.iter().filter(|e| e.task == *task).count();
        println!("{}: {n} {task} entries", dataset.name);
    }
    Ok(())
}

fn read_corpora(paths: &[PathBuf]) -> Result<Vec<MaskedEntry>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_jsonl(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct VocabRun<'a> {
    corpus: &'a [PathBuf],
    out: &'a Path,
    min_count: usize,
}

fn vocab(a: VocabArgs) -> Result<()> {
    show_config(
        "vocab",
        &VocabRun {
            corpus: &a.corpus,
            out: &a.out,
            min_count: a.min_count,
        },
    )?;
    let entries = read_corpora(&a.corpus)?;
    let labels: BTreeSet<&str> = entries.iter().flat_map(|e| e.vocab.iter().map(String::as_str)).collect();
    let v = Vocab::build(labels, entries.iter().map(|e| e.text.as_str()), a.min_count)?;
    v.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} tokens", v.len());
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Checkpoint<f32>> {
    load_checkpoint(path).with_context(|| format!("reading {}", path.display()))
}

/// Sidecar next to a checkpoint: `model.bin` gets `model.toml`.
fn save_with_sidecar(path: &Path, checkpoint: &Checkpoint<f32>, train: &TrainConfig) -> Result<()> {
    save_checkpoint(path, checkpoint).with_context(|| format!("writing {}", path.display()))?;
    let sidecar = pipeline::CheckpointSidecar {
        seed: train.seed,
        model: checkpoint.model.config.clone(),
        train: train.clone(),
    };
    fs::write(path.with_extension("toml"), toml::to_string(&sidecar)?)?;
    Ok(())
}

fn encode_all(vocab: &Vocab, entries: Vec<MaskedEntry>, max_len: usize) -> Result<Vec<Example>> {
    Ok(encode_examples(vocab, entries, max_len)?)
}

#[derive(Serialize)]
struct TrainRun<'a> {
    corpus: &'a [PathBuf],
    vocab: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<&'a Path>,
    out: &'a Path,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

fn train(a: TrainArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let settings = Settings::load(config)?;
    let vocab = load_vocab(&a.vocab)?;
    let init = match &a.init {
        Some(p) => load_model(p)?,
        None => initial_checkpoint(&settings.model, &vocab, seed.unwrap_or(settings.train.seed))?,
    };
    let mut train = settings.train.clone();
    if let Some(s) = seed {
        train.seed = s;
    }
    train.epochs = a.epochs.unwrap_or(train.epochs);
    train.lr = a.lr.unwrap_or(train.lr);
    train.batch_size = a.batch_size.unwrap_or(train.batch_size);
    train.max_steps = a.max_steps.or(train.max_steps);
    train.validate().map_err(|e| Usage(e.to_string()))?;
    show_config(
        "train",
        &TrainRun {
            corpus: &a.corpus,
            vocab: &a.vocab,
            init: a.init.as_deref(),
            out: &a.out,
            model: &init.model.config,
            train: &train,
        },
    )?;
    let examples = encode_all(&vocab, read_corpora(&a.corpus)?, init.model.config.max_len)?;
    let data: Vec<&EncodedEntry> = examples.iter().map(|e| &e.encoded).collect();
    let trained = train_on(&init, &vocab, &data, &train)?;
    save_with_sidecar(&a.out, &trained.checkpoint, &train)?;
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        println!("epoch {}: mean loss {l:.6}", i + 1);
    }
    Ok(())
}

#[derive(Serialize)]
struct AdaptRun<'a> {
    model: &'a Path,
    vocab: &'a Path,
    corpus: &'a Path,
    shots: usize,
    out: &'a Path,
    adapt: &'a TrainConfig,
}

fn adapt(a: AdaptArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let settings = Settings::load(config)?;
    let mut train = settings.adapt.clone().unwrap_or(settings.train.clone());
    if let Some(s) = seed {
        train.seed = s;
    }
    train.validate().map_err(|e| Usage(e.to_string()))?;
    show_config(
        "adapt",
        &AdaptRun {
            model: &a.model,
            vocab: &a.vocab,
            corpus: &a.corpus,
            shots: a.shots,
            out: &a.out,
            adapt: &train,
        },
    )?;
    let checkpoint = load_model(&a.model)?;
    let vocab = load_vocab(&a.vocab)?;
    let examples = encode_all(&vocab, read_jsonl(&a.corpus)?, checkpoint.model.config.max_len)?;
    let adapted = pipeline::adapt(&checkpoint, &vocab, &examples, a.shots, &train, train.seed)?;
    save_with_sidecar(&a.out, &adapted.trained.checkpoint, &train)?;
    if let Some(p) = &a.shots_out {
        let ids: Vec<EntryId> = adapted.shots.iter().map(|&i| examples[i].masked.entry_id).collect();
        write_json(p, &ids)?;
    }
    println!("adapted on {} examples", adapted.shots.len());
    Ok(())
}

#[derive(Serialize)]
struct EvalRun<'a> {
    model: &'a Path,
    vocab: &'a Path,
    corpus: &'a Path,
    metrics: Vec<String>,
    constrained: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    exclude: Option<&'a Path>,
    batch_size: usize,
}

fn eval(a: EvalArgs) -> Result<()> {
    show_config(
        "eval",
        &EvalRun {
            model: &a.model,
            vocab: &a.vocab,
            corpus: &a.corpus,
            metrics: a.metrics.iter().map(|m| format!("{m:?}").to_lowercase()).collect(),
            constrained: !a.unconstrained,
            exclude: a.exclude.as_deref(),
            batch_size: a.batch_size,
        },
    )?;
    let checkpoint = load_model(&a.model)?;
    let vocab = load_vocab(&a.vocab)?;
    pipeline::check_vocab(&checkpoint.model.config, &vocab)?;
    let excluded: BTreeSet<EntryId> = match &a.exclude {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Vec<EntryId>>(&text).with_context(|| format!("parsing {}", p.display()))?.into_iter().collect()
        }
        None => BTreeSet::new(),
    };
    let entries: Vec<MaskedEntry> = read_jsonl(&a.corpus)?
        .into_iter()
        .filter(|e| !excluded.contains(&e.entry_id))
        .collect();
    if entries.is_empty() {
        anyhow::bail!(hgmlm::Error::Data("no entries left to evaluate".into()));
    }
    let examples = encode_all(&vocab, entries, checkpoint.model.config.max_len)?;
    let refs: Vec<&Example> = examples.iter().collect();
    let mut scores: BTreeMap<TaskKind, TaskReport> =
        evaluate(&checkpoint.model, &refs, !a.unconstrained, a.batch_size)?;
    for r in scores.values_mut() {
        if !a.metrics.contains(&Metric::Auc) {
            r.auc = None;
            r.ap = None;
        }
    }
    for (task, r) in &scores {
        let mut line = format!("{task}: {} examples", r.examples);
        if a.metrics.contains(&Metric::F1) {
            line += &format!(", micro-F1 {:.4}, macro-F1 {:.4}", r.micro_f1, r.macro_f1);
        }
        if let (Some(auc), Some(ap)) = (r.auc, r.ap) {
            line += &format!(", AUC {auc:.4}, AP {ap:.4}");
        }
        println!("{line}");
    }
    if let Some(p) = &a.out {
        write_json(p, &scores)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AttentionRun<'a> {
    model: &'a Path,
    vocab: &'a Path,
    corpus: &'a Path,
    entry: String,
    out: &'a Path,
}

fn attention(a: AttentionArgs) -> Result<()> {
    show_config(
        "attention",
        &AttentionRun {
            model: &a.model,
            vocab: &a.vocab,
            corpus: &a.corpus,
            entry: a.entry.to_string(),
            out: &a.out,
        },
    )?;
    let checkpoint = load_model(&a.model)?;
    let vocab = load_vocab(&a.vocab)?;
    pipeline::check_vocab(&checkpoint.model.config, &vocab)?;
    let entry = read_jsonl(&a.corpus)?
        .into_iter()
        .find(|e| e.entry_id == a.entry)
        .ok_or_else(|| hgmlm::Error::Data(format!("no entry {} in {}", a.entry, a.corpus.display())))?;
    let encoded = vocab.encode_entry(&entry, checkpoint.model.config.max_len)?;
    let export = export_attention(&checkpoint.model, &vocab, &encoded)?;
    export.validate(1e-6)?;
    write_json(&a.out, &export)?;
    for t in export.top(a.top) {
        println!("{:>4} {:<24} {:.4}", t.position, t.token, t.score);
    }
    Ok(())
}

fn run(a: RunArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    if config.is_some() {
        return Err(Usage("`run` takes its settings from --plan, not --config".into()).into());
    }
    let mut plan = ExperimentPlan::load(&a.plan).with_context(|| format!("loading {}", a.plan.display()))?;
    if let Some(s) = seed {
        plan.seeds = vec![s];
    }
    show_config("run", &plan)?;
    let base = a.plan.parent().map(Path::to_path_buf).unwrap_or_default();
    let (sources, target) = plan.load_datasets(&base)?;
    let experiment = pipeline::run_experiment(&plan, &sources, &target)?;
    pipeline::write_experiment(&experiment, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    for (task, m) in &experiment.report.mean {
        let mut line = format!("{task}: micro-F1 {:.4}, macro-F1 {:.4}", m.micro_f1, m.macro_f1);
        if let (Some(auc), Some(ap)) = (m.auc, m.ap) {
            line += &format!(", AUC {auc:.4}, AP {ap:.4}");
        }
        println!("{line}");
    }
    Ok(())
}
