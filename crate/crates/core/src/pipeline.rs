//! Cross-domain fine-tuning, K-shot adaptation, prediction and reporting.
//!
//! A run fine-tunes one model on the mixed corpus of every source graph,
//! optionally adapts it on K labelled target examples per class, and scores
//! it on the remaining target entries. Each seed repeats the whole run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_corpus, mask_entry, CorpusConfig, MaskedEntry, PrefixFormat, TaskKind, NO_RELATION};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ingest::load_bundle_file;
use crate::metrics::{auc_ap, micro_macro_f1, per_class_scores, ClassScores};
use crate::model::{predict, save_checkpoint, Checkpoint, Model, ModelConfig, TrainConfig, Trainer};
use crate::seed;
use crate::text::TextMode;
use crate::tokenizer::{EncodedEntry, Vocab};

pub const REPORT_SCHEMA: &str = "v1";

/// Shot counts used by the few-shot protocol; others are allowed but
/// flagged.
pub const STANDARD_SHOTS: [usize; 5] = [0, 1, 5, 20, 40];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Skip source fine-tuning and start adaptation from random weights.
    pub no_finetune: bool,
    /// Keep only the first listed task, for training and evaluation.
    pub single_task: bool,
    /// Replace metapath sequences with the node's own attribute text.
    pub no_metapath: bool,
    /// Predict over the whole vocabulary instead of the candidate labels.
    /// Training stays constrained.
    pub no_constraint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    /// Source datasets: bundle manifests (`.toml`) or binary graphs written
    /// by `ingest`. Relative paths resolve against the plan file.
    pub sources: Vec<PathBuf>,
    pub target: PathBuf,
    /// Tasks in priority order; the first is the target task for the
    /// single-task ablation.
    pub tasks: Vec<TaskKind>,
    pub shots: usize,
    pub mode: TextMode,
    pub format: PrefixFormat,
    /// Instances sampled per metapath.
    pub k: usize,
    pub negative_ratio: f64,
    /// Seed for instance and negative sampling; fixed across runs so every
    /// run sees the same corpus.
    pub corpus_seed: u64,
    /// Combined with each run seed to draw the adaptation shots.
    pub split_seed: u64,
    pub seeds: Vec<u64>,
    pub ablations: Ablations,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Adaptation schedule; defaults to `train`.
    pub adapt: Option<TrainConfig>,
    pub eval_batch_size: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: "experiment".into(),
            sources: Vec::new(),
            target: PathBuf::new(),
            tasks: vec![TaskKind::NodeClassification, TaskKind::LinkPrediction],
            shots: 0,
            mode: TextMode::Both,
            format: PrefixFormat::Metapath,
            k: 3,
            negative_ratio: 1.0,
            corpus_seed: 0,
            split_seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            ablations: Ablations::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            adapt: None,
            eval_batch_size: 32,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("plan cannot be written as TOML: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::InvalidArgument("plan lists no tasks".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("plan lists no seeds".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.negative_ratio >= 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!("negative ratio {} is invalid", self.negative_ratio)));
        }
        if self.sources.iter().any(|s| *s == self.target) {
            return Err(Error::InvalidArgument(format!(
                "target {} is also listed as a source",
                self.target.display()
            )));
        }
        self.train.validate()?;
        if let Some(a) = &self.adapt {
            a.validate()?;
        }
        if !STANDARD_SHOTS.contains(&self.shots) {
            log::warn!("{} shots is outside the standard settings {:?}", self.shots, STANDARD_SHOTS);
        }
        Ok(())
    }

    /// Tasks after the single-task ablation.
    pub fn active_tasks(&self) -> Vec<TaskKind> {
        if self.ablations.single_task {
            self.tasks[..1].to_vec()
        } else {
            self.tasks.clone()
        }
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            tasks: self.active_tasks(),
            mode: self.mode,
            format: if self.ablations.no_metapath {
                PrefixFormat::Attribute
            } else {
                self.format
            },
            k: self.k,
            negative_ratio: self.negative_ratio,
            seed: self.corpus_seed,
        }
    }

    pub fn adapt_config(&self) -> &TrainConfig {
        self.adapt.as_ref().unwrap_or(&self.train)
    }

    /// Loads the source and target datasets, resolving relative paths
    /// against `base`.
    pub fn load_datasets(&self, base: &Path) -> Result<(Vec<Dataset>, Dataset)> {
        let sources = self
            .sources
            .iter()
            .map(|p| load_dataset(&base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let target = load_dataset(&base.join(&self.target))?;
        Ok((sources, target))
    }
}

/// Reads a bundle manifest (`.toml`) or a binary graph file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "toml") {
        load_bundle_file(path)
    } else {
        Dataset::from_bytes(&fs::read(path)?)
    }
}

/// A corpus entry in both textual and encoded form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub masked: MaskedEntry,
    pub encoded: EncodedEntry,
}

pub fn encode_examples(vocab: &Vocab, entries: Vec<MaskedEntry>, max_len: usize) -> Result<Vec<Example>> {
    entries
        .into_iter()
        .map(|masked| {
            let encoded = vocab.encode_entry(&masked, max_len)?;
            Ok(Example { masked, encoded })
        })
        .collect()
}

/// Everything a run needs that does not depend on the run seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocab,
    pub source: Vec<Example>,
    pub target: Vec<Example>,
}

fn masked_corpus(dataset: &Dataset, config: &CorpusConfig) -> Result<Vec<MaskedEntry>> {
    build_corpus(dataset, config)?.iter().map(mask_entry).collect()
}

/// Builds the source and target corpora and one shared vocabulary over
/// both.
pub fn prepare(plan: &ExperimentPlan, sources: &[Dataset], target: &Dataset) -> Result<PreparedData> {
    if sources.is_empty() && !plan.ablations.no_finetune {
        return Err(Error::InvalidArgument("plan has no source datasets".into()));
    }
    if let Some(s) = sources.iter().find(|s| s.name == target.name) {
        return Err(Error::InvalidArgument(format!("target dataset `{}` is also a source", s.name)));
    }
    let config = plan.corpus_config();
    let mut source = Vec::new();
    for d in sources {
        source.extend(masked_corpus(d, &config)?);
    }
    let target_entries = masked_corpus(target, &config)?;
    if target_entries.is_empty() {
        return Err(Error::Data(format!("target `{}` yields no entries for {:?}", target.name, config.tasks)));
    }
    let all = || source.iter().chain(&target_entries);
    let labels: BTreeSet<&str> = all().flat_map(|e| e.vocab.iter().map(String::as_str)).collect();
    let vocab = Vocab::build(labels, all().map(|e| e.text.as_str()), 1)?;
    let max_len = plan.model.max_len;
    Ok(PreparedData {
        source: encode_examples(&vocab, source, max_len)?,
        target: encode_examples(&vocab, target_entries, max_len)?,
        vocab,
    })
}

/// Fails unless the model was built for exactly this vocabulary.
pub fn check_vocab(config: &ModelConfig, vocab: &Vocab) -> Result<()> {
    if config.vocab_size != vocab.len() {
        return Err(Error::Data(format!(
            "model expects a vocabulary of {} tokens but the vocabulary has {}",
            config.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint<f32>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Continues training `checkpoint` on `data` with a fresh optimizer.
/// Zero epochs or no data leave the checkpoint untouched.
pub fn train_on(checkpoint: &Checkpoint<f32>, vocab: &Vocab, data: &[&EncodedEntry], config: &TrainConfig) -> Result<Trained> {
    check_vocab(&checkpoint.model.config, vocab)?;
    if config.epochs == 0 || data.is_empty() || config.max_steps == Some(0) {
        return Ok(Trained {
            checkpoint: checkpoint.clone(),
            epoch_losses: Vec::new(),
        });
    }
    let owned: Vec<EncodedEntry> = data.iter().map(|&e| e.clone()).collect();
    let mut trainer = Trainer::new(checkpoint.model.clone(), config.clone())?;
    let mut sums: Vec<(f64, usize)> = Vec::new();
    trainer.fit(&owned, |_, info| {
        if sums.len() <= info.epoch {
            sums.resize(info.epoch + 1, (0.0, 0));
        }
        sums[info.epoch].0 += info.loss;
        sums[info.epoch].1 += 1;
        ControlFlow::Continue(())
    })?;
    Ok(Trained {
        checkpoint: Checkpoint {
            model: trainer.model,
            optimizer: Some(trainer.optimizer),
        },
        epoch_losses: sums.into_iter().map(|(s, n)| s / n as f64).collect(),
    })
}

/// A randomly initialised model sized for `vocab`.
pub fn initial_checkpoint(config: &ModelConfig, vocab: &Vocab, seed: u64) -> Result<Checkpoint<f32>> {
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..config.clone()
    };
    Ok(Checkpoint {
        model: Model::new(config, seed)?,
        optimizer: None,
    })
}

/// Fine-tunes a fresh model on the shuffled union of the source entries.
/// With the no-finetune ablation, or zero epochs, the initial model is
/// returned.
pub fn finetune(plan: &ExperimentPlan, data: &PreparedData, seed: u64) -> Result<Trained> {
    let init = initial_checkpoint(&plan.model, &data.vocab, seed)?;
    if plan.ablations.no_finetune {
        return Ok(Trained {
            checkpoint: init,
            epoch_losses: Vec::new(),
        });
    }
    let config = TrainConfig {
        seed,
        ..plan.train.clone()
    };
    let entries: Vec<&EncodedEntry> = data.source.iter().map(|e| &e.encoded).collect();
    train_on(&init, &data.vocab, &entries, &config)
}

/// Class-balanced K-shot sample: for every task and every label of that
/// task, `k` entries drawn with a seeded shuffle. Returns sorted indices
/// into `entries`.
pub fn sample_shots(entries: &[MaskedEntry], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut by_class: BTreeMap<(TaskKind, &str), Vec<usize>> = BTreeMap::new();
    let mut class_sets: BTreeMap<TaskKind, &[String]> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_class.entry((e.task, e.target.as_str())).or_default().push(i);
        let labels = class_sets.entry(e.task).or_insert(&e.vocab);
        if *labels != e.vocab.as_slice() {
            return Err(Error::Data(format!("{} entries disagree on their label set", e.task)));
        }
    }
    let mut short = Vec::new();
    let mut picked = Vec::new();
    for (&task, labels) in &class_sets {
        for label in labels.iter() {
            let pool = by_class.get(&(task, label.as_str())).map(Vec::as_slice).unwrap_or(&[]);
            if pool.len() < k {
                short.push(format!("{task} {label} ({} available)", pool.len()));
                continue;
            }
            let mut pool = pool.to_vec();
            let mut rng = seed::rng(&[seed, seed::str_seed(task.code()), seed::str_seed(label)]);
            pool.shuffle(&mut rng);
            picked.extend_from_slice(&pool[..k]);
        }
    }
    if !short.is_empty() {
        return Err(Error::Data(format!("fewer than {k} labelled examples for: {}", short.join(", "))));
    }
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct Adapted {
    pub trained: Trained,
    /// Indices of the adaptation examples within the target entries.
    pub shots: Vec<usize>,
}

/// K-shot adaptation on the target. `K = 0` returns the input unchanged.
pub fn adapt(
    checkpoint: &Checkpoint<f32>,
    vocab: &Vocab,
    target: &[Example],
    shots: usize,
    config: &TrainConfig,
    shot_seed: u64,
) -> Result<Adapted> {
    check_vocab(&checkpoint.model.config, vocab)?;
    let masked: Vec<MaskedEntry> = target.iter().map(|e| e.masked.clone()).collect();
    let picked = sample_shots(&masked, shots, shot_seed)?;
    let data: Vec<&EncodedEntry> = picked.iter().map(|&i| &target[i].encoded).collect();
    let trained = train_on(checkpoint, vocab, &data, config)?;
    Ok(Adapted { trained, shots: picked })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub examples: usize,
    /// Unconstrained predictions that were not a label of the task.
    pub out_of_vocabulary: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Ranking of link existence by `1 - p(<no relation>)`; link
    /// prediction only, and only when both outcomes occur.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    pub per_class: Vec<ClassScores>,
}

/// Scores `model` on `examples`, grouped by task.
pub fn evaluate(
    model: &Model<f32>,
    examples: &[&Example],
    constrained: bool,
    batch_size: usize,
) -> Result<BTreeMap<TaskKind, TaskReport>> {
    let mut by_task: BTreeMap<TaskKind, Vec<&Example>> = BTreeMap::new();
    for e in examples {
        by_task.entry(e.masked.task).or_default().push(e);
    }
    let mut out = BTreeMap::new();
    for (task, group) in by_task {
        let labels = &group[0].masked.vocab;
        if let Some(e) = group.iter().find(|e| e.masked.vocab != *labels) {
            return Err(Error::Data(format!("entry {} has a different label set", e.masked.entry_id)));
        }
        let encoded: Vec<EncodedEntry> = group.iter().map(|e| e.encoded.clone()).collect();
        let preds = predict(model, &encoded, constrained, batch_size)?;
        let gold: Vec<usize> = encoded.iter().map(|e| e.target).collect();
        let pred: Vec<Option<usize>> = preds.iter().map(|p| p.candidate).collect();
        let f1 = micro_macro_f1(&gold, &pred, labels.len())?;
        let (mut auc, mut ap) = (None, None);
        if task == TaskKind::LinkPrediction {
            if let Some(none) = labels.iter().position(|l| l == NO_RELATION) {
                let scores: Vec<f64> = preds.iter().map(|p| 1.0 - p.probs[none]).collect();
                let exists: Vec<bool> = gold.iter().map(|&g| g != none).collect();
                if exists.iter().any(|&x| x) && exists.iter().any(|&x| !x) {
                    let r = auc_ap(&scores, &exists)?;
                    auc = Some(r.auc);
                    ap = Some(r.ap);
                }
            }
        }
        out.insert(
            task,
            TaskReport {
                examples: group.len(),
                out_of_vocabulary: pred.iter().filter(|p| p.is_none()).count(),
                micro_f1: f1.micro,
                macro_f1: f1.macro_,
                auc,
                ap,
                per_class: per_class_scores(&gold, &pred, labels)?,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub finetune_losses: Vec<f64>,
    pub adapt_losses: Vec<f64>,
    pub shots: usize,
    pub eval_examples: usize,
    pub tasks: BTreeMap<TaskKind, TaskReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub source_entries: usize,
    pub target_entries: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub plan: ExperimentPlan,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    pub source_datasets: Vec<String>,
    pub target_dataset: String,
    pub counts: Counts,
    pub runs: Vec<RunReport>,
    /// Scores averaged over runs.
    pub mean: BTreeMap<TaskKind, MeanScores>,
}

impl Report {
    /// Structural checks a consumer can rely on.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Data(format!("report: {m}")));
        if self.schema != REPORT_SCHEMA {
            return fail(format!("schema `{}`", self.schema));
        }
        if self.runs.len() != self.seeds.len() {
            return fail(format!("{} runs for {} seeds", self.runs.len(), self.seeds.len()));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for run in &self.runs {
            for (task, t) in &run.tasks {
                let support: usize = t.per_class.iter().map(|c| c.support).sum();
                if support != t.examples {
                    return fail(format!("{task}: supports sum to {support}, not {}", t.examples));
                }
                let values = [t.micro_f1, t.macro_f1].into_iter().chain(t.auc).chain(t.ap);
                let per_class = t.per_class.iter().flat_map(|c| [c.precision, c.recall, c.f1]);
                if !values.chain(per_class).all(unit) {
                    return fail(format!("{task}: score outside [0, 1]"));
                }
            }
            let total: usize = run.tasks.values().map(|t| t.examples).sum();
            if total != run.eval_examples {
                return fail(format!("seed {}: {total} scored of {} eval examples", run.seed, run.eval_examples));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_scores(runs: &[RunReport]) -> BTreeMap<TaskKind, MeanScores> {
    let mut out = BTreeMap::new();
    let tasks: BTreeSet<TaskKind> = runs.iter().flat_map(|r| r.tasks.keys().copied()).collect();
    for task in tasks {
        let reports: Vec<&TaskReport> = runs.iter().filter_map(|r| r.tasks.get(&task)).collect();
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&TaskReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
        let opt = |f: &dyn Fn(&TaskReport) -> Option<f64>| {
            let v: Option<Vec<f64>> = reports.iter().map(|r| f(r)).collect();
            v.map(|v| v.iter().sum::<f64>() / n)
        };
        out.insert(
            task,
            MeanScores {
                micro_f1: avg(&|r| r.micro_f1),
                macro_f1: avg(&|r| r.macro_f1),
                auc: opt(&|r| r.auc),
                ap: opt(&|r| r.ap),
            },
        );
    }
    out
}

/// The final state of one seed's run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub checkpoint: Checkpoint<f32>,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub vocab: Vocab,
    pub runs: Vec<RunOutcome>,
    pub report: Report,
}

/// Shot seed of one run: the plan's split seed mixed with the run seed.
pub fn shot_seed(plan: &ExperimentPlan, run_seed: u64) -> u64 {
    seed::hash64(&[plan.split_seed, run_seed])
}

/// One seed: finetune, adapt, evaluate on the target entries not used as
/// shots.
pub fn run_seed(plan: &ExperimentPlan, data: &PreparedData, seed: u64) -> Result<RunOutcome> {
    let tuned = finetune(plan, data, seed)?;
    let adapt_config = TrainConfig {
        seed,
        ..plan.adapt_config().clone()
    };
    let adapted = adapt(
        &tuned.checkpoint,
        &data.vocab,
        &data.target,
        plan.shots,
        &adapt_config,
        shot_seed(plan, seed),
    )?;
    let used: BTreeSet<usize> = adapted.shots.iter().copied().collect();
    let eval: Vec<&Example> = (0..data.target.len()).filter(|i| !used.contains(i)).map(|i| &data.target[i]).collect();
    if eval.is_empty() {
        return Err(Error::Data("every target entry was used for adaptation".into()));
    }
    let checkpoint = adapted.trained.checkpoint;
    let tasks = evaluate(&checkpoint.model, &eval, !plan.ablations.no_constraint, plan.eval_batch_size)?;
    Ok(RunOutcome {
        seed,
        report: RunReport {
            seed,
            finetune_losses: tuned.epoch_losses,
            adapt_losses: adapted.trained.epoch_losses,
            shots: adapted.shots.len(),
            eval_examples: eval.len(),
            tasks,
        },
        checkpoint,
    })
}

/// Runs every seed of the plan on already loaded datasets.
pub fn run_experiment(plan: &ExperimentPlan, sources: &[Dataset], target: &Dataset) -> Result<Experiment> {
    plan.validate()?;
    let data = prepare(plan, sources, target)?;
    let runs = plan
        .seeds
        .iter()
        .map(|&s| run_seed(plan, &data, s))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<RunReport> = runs.iter().map(|r| r.report.clone()).collect();
    let report = Report {
        schema: REPORT_SCHEMA.into(),
        plan: plan.clone(),
        seeds: plan.seeds.clone(),
        split_seed: plan.split_seed,
        source_datasets: sources.iter().map(|d| d.name.clone()).collect(),
        target_dataset: target.name.clone(),
        counts: Counts {
            source_entries: data.source.len(),
            target_entries: data.target.len(),
            vocab_size: data.vocab.len(),
        },
        mean: mean_scores(&reports),
        runs: reports,
    };
    report.validate()?;
    Ok(Experiment {
        vocab: data.vocab,
        runs,
        report,
    })
}

/// Sidecar describing how a checkpoint was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Writes `report.json`, `vocab.tsv` and `seed-N/{model.bin,config.toml}`
/// under `dir`.
pub fn write_experiment(experiment: &Experiment, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), experiment.report.to_json()? + "\n")?;
    experiment.vocab.save(&dir.join("vocab.tsv"))?;
    for run in &experiment.runs {
        let sub = dir.join(format!("seed-{}", run.seed));
        fs::create_dir_all(&sub)?;
        save_checkpoint(&sub.join("model.bin"), &run.checkpoint)?;
        let sidecar = CheckpointSidecar {
            seed: run.seed,
            model: run.checkpoint.model.config.clone(),
            train: experiment.report.plan.train.clone(),
        };
        let text = toml::to_string(&sidecar).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        fs::write(sub.join("config.toml"), text)?;
    }
    Ok(())
}

/// Loads a plan file, runs it and writes the outputs to `out`.
pub fn run_plan_file(plan_path: &Path, out: &Path) -> Result<Experiment> {
    let plan = ExperimentPlan::load(plan_path)?;
    let base = plan_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let (sources, target) = plan.load_datasets(&base)?;
    let experiment = run_experiment(&plan, &sources, &target)?;
    write_experiment(&experiment, out)?;
    Ok(experiment)
}
