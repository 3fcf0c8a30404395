//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hgmlm::corpus::{
    build_corpus, mask_entry, read_jsonl, render_lp_task, render_nc_task, CorpusConfig, MaskedEntry, TaskKind,
};
use hgmlm::dataset::Dataset;
use hgmlm::ingest::load_bundle_file;
use hgmlm::metrics::{average_precision, micro_macro_f1, roc_auc};
use hgmlm::model::{
    constrained_log_probs, constrained_loss, export_attention, predict, Batch, Model, ModelConfig, TrainConfig, Trainer,
};
use hgmlm::pipeline::{
    adapt, encode_examples, evaluate, finetune, prepare, run_experiment, shot_seed, Example, ExperimentPlan,
};
use hgmlm::seed;
use hgmlm::synthetic::{plurality_dataset, PluralityConfig};
use hgmlm::text::TextMode;
use hgmlm::tokenizer::{EncodedEntry, Vocab, PAD_ID};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt_scores(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hgmlm"));
    c.env("HGMLM_THREADS", "4");
    c
}

// 1 ------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct Golden {
    seed: u64,
    entries: Vec<GoldenEntry>,
}

#[derive(serde::Deserialize)]
struct GoldenEntry {
    fixture: String,
    task: TaskKind,
    k: usize,
    text: String,
}

fn golden_corpus() -> Outcome {
    let golden: Golden = serde_json::from_str(&fs::read_to_string(fixtures().join("golden_corpus.json")).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut matched = 0;
    for g in golden.entries.iter().filter(|g| g.task == TaskKind::NodeClassification) {
        let out = dir.path().join(format!("{}.jsonl", g.fixture));
        let status = bin()
            .args(["corpus", "--tasks", "nc", "--seed", &golden.seed.to_string(), "--k", &g.k.to_string()])
            .arg("--graph")
            .arg(fixtures().join(&g.fixture).join("bundle.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        check(status.status.success(), format!("corpus failed on {}", g.fixture))?;
        let expected = normalize(&g.text);
        let texts: Vec<String> = read_jsonl(&out).unwrap().iter().map(|e| normalize(&e.unmask())).collect();
        check(texts.contains(&expected), format!("{}: reference entry not produced", g.fixture))?;
        matched += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(matched == 4, format!("{matched} node classification references"))?;
    check(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("4/4 entries byte-identical after whitespace normalisation in {secs:.2}s"))
}

// 2 ------------------------------------------------------------------------

fn template_fidelity() -> Outcome {
    let diseases: Vec<String> = ["<glandular disease>", "<skin disease>"].map(String::from).to_vec();
    let nc = render_nc_task("disease breasts", "<glandular disease>", &diseases).unwrap();
    let nc_expected = "You can deduce the category of disease breasts as <glandular disease>.";
    check(nc == nc_expected, format!("nc rendered `{nc}`"))?;
    let relations: Vec<String> = ["<causing>", "<no relation>"].map(String::from).to_vec();
    let lp = render_lp_task("gene thyroid transcription factor-1", "disease bronchial abnormalities", "<causing>", &relations)
        .unwrap();
    let lp_expected = "You can deduce gene thyroid transcription factor-1 <causing> disease bronchial abnormalities.";
    check(lp == lp_expected, format!("lp rendered `{lp}`"))?;

    // the same sentences come out of the PubMed fixture
    let dataset = load_bundle_file(&fixtures().join("pubmed-mini/bundle.toml")).unwrap();
    let entries = build_corpus(&dataset, &CorpusConfig::default()).unwrap();
    let sentences: Vec<String> = entries.iter().map(|e| e.task_text.replace("<target>", &e.target)).collect();
    check(sentences.iter().any(|t| t == nc_expected), "fixture corpus lacks the nc sentence")?;
    check(sentences.iter().any(|t| t == lp_expected), "fixture corpus lacks the lp sentence")?;
    Ok("both sentences match exactly, from the templates and from the fixture corpus".into())
}

// 3 ------------------------------------------------------------------------

fn softmax_properties() -> Outcome {
    let mut rng = seed::rng(&[3]);
    let mut worst_sum: f64 = 0.0;
    let mut worst_uniform: f64 = 0.0;
    let mut worst_single: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(2..64);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-40.0..40.0)).collect();
        let c = rng.random_range(1..=n.min(12));
        let candidates: Vec<u32> = (0..c).map(|_| rng.random_range(0..n) as u32).collect();
        let total: f64 = constrained_log_probs(&logits, &candidates).unwrap().iter().map(|l| l.exp()).sum();
        worst_sum = worst_sum.max((total - 1.0).abs());

        let level = rng.random_range(-5.0..5.0);
        let flat = vec![level; n];
        let distinct: Vec<u32> = (0..c as u32).collect();
        let loss = constrained_loss(&flat, &distinct, rng.random_range(0..c)).unwrap();
        worst_uniform = worst_uniform.max((loss - (c as f64).ln()).abs());

        let single = constrained_loss(&logits, &candidates[..1], 0).unwrap();
        worst_single = worst_single.max(single.abs());
    }
    check(worst_sum <= 1e-12, format!("probabilities sum off by {worst_sum:e}"))?;
    check(worst_uniform <= 1e-9, format!("uniform loss off by {worst_uniform:e}"))?;
    check(worst_single <= 1e-12, format!("single-candidate loss {worst_single:e}"))?;
    Ok(format!(
        "max |sum-1| {worst_sum:.1e}, max |loss-ln|C|| {worst_uniform:.1e}, max |C|=1 loss {worst_single:.1e}"
    ))
}

// 4 ------------------------------------------------------------------------

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig {
        vocab_size: 20,
        max_len: 12,
        layers: 1,
        heads: 1,
        dim: 8,
        ffn: 16,
        dropout: 0.0,
        init_std: 0.5,
        ..ModelConfig::default()
    };
    let entry = |ids: &[u32], mask_pos: usize, candidates: &[u32], target: usize| EncodedEntry {
        ids: ids.to_vec(),
        mask_pos,
        candidates: candidates.to_vec(),
        target,
    };
    let entries = [
        entry(&[7, 8, 3, 9, 2, 10], 4, &[4, 5, 6], 1),
        entry(&[11, 2, 12, 13], 1, &[4, 5, 6], 2),
        entry(&[2, 14, 15, 16, 17, 3, 18, 19], 0, &[4, 6], 0),
    ];
    let batch = Batch::from_entries(&entries, &config).unwrap();
    let model = Model::<f64>::new(config, 11).unwrap();
    let (_, grads) = model.loss_and_grad(&batch, None).unwrap();
    let eps = 1e-3;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for t in 0..probe.params.len() {
        for i in 0..probe.params.tensors[t].len() {
            let orig = probe.params.tensors[t].as_slice().unwrap()[i];
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig + eps;
            let up = probe.loss(&batch).unwrap();
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig - eps;
            let down = probe.loss(&batch).unwrap();
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors[t].as_slice().unwrap()[i];
            // floor keeps exactly-zero gradients (unused embedding rows) from dividing by zero
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-4, format!("max relative error {worst:e}"))?;
    check(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("{count} parameters, max relative error {worst:.2e}, {secs:.2}s"))
}

// 5 and 7 ------------------------------------------------------------------

/// The 32-entry, three-class node classification corpus.
fn small_nc_task() -> (Vocab, Vec<Example>) {
    let dataset = plurality_dataset(&PluralityConfig {
        name: "overfit".into(),
        items: 32,
        seed: 5,
        ..PluralityConfig::default()
    })
    .unwrap();
    let config = CorpusConfig {
        tasks: vec![TaskKind::NodeClassification],
        ..CorpusConfig::default()
    };
    let masked: Vec<MaskedEntry> = build_corpus(&dataset, &config).unwrap().iter().map(|e| mask_entry(e).unwrap()).collect();
    let labels: BTreeSet<&str> = masked.iter().flat_map(|e| e.vocab.iter().map(String::as_str)).collect();
    let vocab = Vocab::build(labels, masked.iter().map(|e| e.text.as_str()), 1).unwrap();
    let examples = encode_examples(&vocab, masked, ModelConfig::default().max_len).unwrap();
    (vocab, examples)
}

fn overfit() -> Outcome {
    let (vocab, examples) = small_nc_task();
    check(examples.len() == 32, format!("{} entries", examples.len()))?;
    check(examples.iter().all(|e| e.encoded.candidates.len() == 3), "|C| != 3")?;
    let data: Vec<EncodedEntry> = examples.iter().map(|e| e.encoded.clone()).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (reached, steps, acc) = pool.install(|| {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            ..ModelConfig::default()
        };
        let model = Model::<f32>::new(config, 0).unwrap();
        let train = TrainConfig {
            epochs: 1000,
            max_steps: Some(500),
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(model, train).unwrap();
        let mut best = (false, 0, 0.0);
        trainer
            .fit(&data, |model, info| {
                if info.step % 5 != 0 {
                    return std::ops::ControlFlow::Continue(());
                }
                let acc = hgmlm::model::accuracy(model, &data).unwrap();
                best = (acc >= 0.95, info.step, acc);
                if acc >= 0.95 {
                    std::ops::ControlFlow::Break(())
                } else {
                    std::ops::ControlFlow::Continue(())
                }
            })
            .unwrap();
        best
    });
    let secs = start.elapsed().as_secs_f64();
    check(reached, format!("training accuracy {acc:.3} after {steps} steps"))?;
    check(secs < 300.0, format!("took {secs:.0}s"))?;
    Ok(format!("training accuracy {acc:.3} at step {steps}, single thread, {secs:.1}s"))
}

fn constraint_ablation() -> Outcome {
    let (vocab, examples) = small_nc_task();
    let refs: Vec<&Example> = examples.iter().collect();
    let (mut constrained, mut free) = (Vec::new(), Vec::new());
    for s in 0..5 {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            ..ModelConfig::default()
        };
        let model = Model::<f32>::new(config, s).unwrap();
        let c = evaluate(&model, &refs, true, 32).unwrap()[&TaskKind::NodeClassification].micro_f1;
        let u = evaluate(&model, &refs, false, 32).unwrap()[&TaskKind::NodeClassification].micro_f1;
        constrained.push(c);
        free.push(u);
    }
    let (c, u) = (mean(&constrained), mean(&free));
    check((c - 1.0 / 3.0).abs() <= 0.1, format!("constrained micro-F1 {c:.3}"))?;
    check(u < c, format!("unconstrained {u:.3} not below constrained {c:.3}"))?;
    Ok(format!(
        "constrained {c:.3} (per seed {}), unconstrained {u:.3} (per seed {})",
        fmt_scores(&constrained),
        fmt_scores(&free)
    ))
}

// 6 ------------------------------------------------------------------------

fn structure_only() -> Outcome {
    let mut scores = Vec::new();
    for s in 0..5u64 {
        let dataset = plurality_dataset(&PluralityConfig {
            name: "plurality".into(),
            items: 1000,
            seed: 100 + s,
            ..PluralityConfig::default()
        })
        .unwrap();
        let config = CorpusConfig {
            tasks: vec![TaskKind::NodeClassification],
            mode: TextMode::StructureOnly,
            seed: s,
            ..CorpusConfig::default()
        };
        let masked: Vec<MaskedEntry> =
            build_corpus(&dataset, &config).unwrap().iter().map(|e| mask_entry(e).unwrap()).collect();
        let labels: BTreeSet<&str> = masked.iter().flat_map(|e| e.vocab.iter().map(String::as_str)).collect();
        let vocab = Vocab::build(labels, masked.iter().map(|e| e.text.as_str()), 1).unwrap();
        let model_config = ModelConfig {
            vocab_size: vocab.len(),
            max_len: 128,
            layers: 2,
            heads: 2,
            dim: 32,
            ffn: 64,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let mut examples = encode_examples(&vocab, masked, model_config.max_len).unwrap();
        examples.shuffle(&mut seed::rng(&[s, 7]));
        let split = examples.len() * 4 / 5;
        let (train, test) = examples.split_at(split);
        let train_data: Vec<EncodedEntry> = train.iter().map(|e| e.encoded.clone()).collect();
        let tc = TrainConfig {
            lr: 1e-3,
            epochs: 6,
            batch_size: 16,
            seed: s,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(Model::<f32>::new(model_config, s).unwrap(), tc).unwrap();
        trainer.fit(&train_data, |_, _| std::ops::ControlFlow::Continue(())).unwrap();
        let refs: Vec<&Example> = test.iter().collect();
        scores.push(evaluate(&trainer.model, &refs, true, 64).unwrap()[&TaskKind::NodeClassification].micro_f1);
    }
    let m = mean(&scores);
    check(m >= 0.90, format!("mean test micro-F1 {m:.3} (per seed {})", fmt_scores(&scores)))?;
    Ok(format!("mean test micro-F1 {m:.3} (per seed {})", fmt_scores(&scores)))
}

// 8 ------------------------------------------------------------------------

fn transfer_graph(name: &str, items: usize, seed: u64, prefix: &str) -> Dataset {
    plurality_dataset(&PluralityConfig {
        name: name.into(),
        items,
        seed,
        vocabulary: (0..20).map(|i| format!("{prefix}{i}")).collect(),
        ..PluralityConfig::default()
    })
    .unwrap()
}

fn transfer() -> Outcome {
    let source = transfer_graph("source", 300, 1, "red");
    let target = transfer_graph("target", 150, 2, "blue");
    let plan = ExperimentPlan {
        name: "transfer".into(),
        mode: TextMode::StructureOnly,
        shots: 5,
        seeds: (0..5).collect(),
        model: ModelConfig {
            max_len: 160,
            layers: 2,
            heads: 2,
            dim: 32,
            ffn: 64,
            dropout: 0.0,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            lr: 1e-3,
            epochs: 10,
            batch_size: 16,
            ..TrainConfig::default()
        },
        adapt: Some(TrainConfig {
            lr: 3e-4,
            epochs: 10,
            batch_size: 16,
            ..TrainConfig::default()
        }),
        ..ExperimentPlan::default()
    };
    let data = prepare(&plan, std::slice::from_ref(&source), &target).unwrap();
    let (mut zero, mut few) = (Vec::new(), Vec::new());
    for &s in &plan.seeds {
        let tuned = finetune(&plan, &data, s).unwrap();
        let adapt_config = TrainConfig {
            seed: s,
            ..plan.adapt_config().clone()
        };
        let adapted = adapt(&tuned.checkpoint, &data.vocab, &data.target, plan.shots, &adapt_config, shot_seed(&plan, s))
            .unwrap();
        let used: BTreeSet<usize> = adapted.shots.iter().copied().collect();
        let eval: Vec<&Example> = data
            .target
            .iter()
            .enumerate()
            .filter(|(i, e)| !used.contains(i) && e.masked.task == TaskKind::NodeClassification)
            .map(|(_, e)| e)
            .collect();
        let nc = |m: &Model<f32>| evaluate(m, &eval, true, 64).unwrap()[&TaskKind::NodeClassification].micro_f1;
        zero.push(nc(&tuned.checkpoint.model));
        few.push(nc(&adapted.trained.checkpoint.model));
    }
    let z = mean(&zero);
    let improved = zero.iter().zip(&few).filter(|(z, f)| f > z).count();
    let detail = format!(
        "zero-shot mean {z:.3} ({}), K=5 ({}), improved in {improved}/5 seeds",
        fmt_scores(&zero),
        fmt_scores(&few)
    );
    check(z >= 1.0 / 3.0 + 0.15, detail.clone())?;
    check(improved >= 4, detail.clone())?;
    Ok(detail)
}

// 9 ------------------------------------------------------------------------

fn f1_reference(gold: &[usize], pred: &[usize], k: usize) -> (f64, f64) {
    let f = |tp: f64, fp: f64, fn_: f64| if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    let mut per = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
        let fp = gold.iter().zip(pred).filter(|(g, p)| **g != c && **p == c).count() as f64;
        let fn_ = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p != c).count() as f64;
        per.push(f(tp, fp, fn_));
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    (f(tp_all, fp_all, fn_all), mean(&per))
}

fn auc_reference(s: &[f64], y: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                total += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    total / pairs
}

fn ap_reference(s: &[f64], y: &[bool]) -> f64 {
    let pos = y.iter().filter(|&&b| b).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && y[i]).count() as f64;
        let n = (0..s.len()).filter(|&i| s[i] >= t).count() as f64;
        ap += (tp / pos - prev) * tp / n;
        prev = tp / pos;
    }
    ap
}

fn metrics_oracles() -> Outcome {
    let mut rng = seed::rng(&[9]);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..7);
        let n = rng.random_range(1..80);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let some: Vec<Option<usize>> = pred.iter().map(|&p| Some(p)).collect();
        let got = micro_macro_f1(&gold, &some, k).unwrap();
        let (micro, macro_) = f1_reference(&gold, &pred, k);
        worst = worst.max((got.micro - micro).abs()).max((got.macro_ - macro_).abs());
    }
    let mut worst_rank: f64 = 0.0;
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..60);
        let grid = rng.random_range(2..20) as f64;
        let s: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..grid)).floor() / grid).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if !(y.iter().any(|&b| b) && y.iter().any(|&b| !b)) {
            continue;
        }
        worst_rank = worst_rank
            .max((roc_auc(&s, &y).unwrap() - auc_reference(&s, &y)).abs())
            .max((average_precision(&s, &y).unwrap() - ap_reference(&s, &y)).abs());
        done += 1;
    }
    let worked = roc_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
    check(worst <= 1e-9, format!("F1 deviates by {worst:e}"))?;
    check(worst_rank <= 1e-9, format!("AUC/AP deviate by {worst_rank:e}"))?;
    check(worked == 0.75, format!("worked example AUC {worked}"))?;
    Ok(format!("200 F1 and 200 AUC/AP instances, max deviation {:.1e}, worked example AUC = 0.75", worst.max(worst_rank)))
}

// 10 -----------------------------------------------------------------------

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan = fixtures().join("synthetic/plan.toml");
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = bin().arg("run").arg("--plan").arg(&plan).arg("--out").arg(&out).output().unwrap();
        check(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
        outputs.push(files_under(&out));
    }
    check(outputs[0].contains_key(Path::new("report.json")), "no report.json")?;
    let checkpoints = outputs[0].keys().filter(|p| p.ends_with("model.bin")).count();
    check(checkpoints == 2, format!("{checkpoints} checkpoints"))?;
    for (path, bytes) in &outputs[0] {
        check(outputs[1].get(path) == Some(bytes), format!("{} differs", path.display()))?;
    }
    check(outputs[0].len() == outputs[1].len(), "different file sets")?;
    Ok(format!("{} files byte-identical across two runs, including {checkpoints} checkpoints", outputs[0].len()))
}

// 11 -----------------------------------------------------------------------

fn validate_schema(v: &serde_json::Value, entry: &EncodedEntry) -> Result<(), String> {
    let obj = v.as_object().ok_or("export is not an object")?;
    let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
    check(keys == BTreeSet::from(["layer", "heads", "query_position", "tokens"]), format!("keys {keys:?}"))?;
    check(v["layer"].is_u64() && v["heads"].is_u64(), "layer/heads not integers")?;
    check(v["query_position"].as_u64() == Some(entry.mask_pos as u64), "query is not the mask")?;
    let tokens = v["tokens"].as_array().ok_or("tokens is not an array")?;
    let real = entry.ids.iter().filter(|&&t| t != PAD_ID).count();
    check(tokens.len() == real, format!("{} records for {real} tokens", tokens.len()))?;
    for t in tokens {
        let fields: BTreeSet<&str> = t.as_object().ok_or("token is not an object")?.keys().map(String::as_str).collect();
        check(fields == BTreeSet::from(["position", "token", "score"]), format!("token fields {fields:?}"))?;
        check(t["position"].is_u64() && t["token"].is_string() && t["score"].is_f64(), "token field types")?;
    }
    Ok(())
}

fn attention_export() -> Outcome {
    let plan = ExperimentPlan::load(&fixtures().join("synthetic/plan.toml")).unwrap();
    let (sources, target) = plan.load_datasets(&fixtures().join("synthetic")).unwrap();
    let plan = ExperimentPlan {
        seeds: vec![0],
        ..plan
    };
    let experiment = run_experiment(&plan, &sources, &target).unwrap();
    let model = &experiment.runs[0].checkpoint.model;
    let data = prepare(&plan, &sources, &target).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for e in data.target.iter().chain(&data.source).step_by(3) {
        let export = export_attention(model, &experiment.vocab, &e.encoded).map_err(|e| e.to_string())?;
        check(export.tokens.iter().all(|t| t.score >= 0.0), "negative score")?;
        let total: f64 = export.tokens.iter().map(|t| t.score).sum();
        worst = worst.max((total - 1.0).abs());
        export.validate(1e-6).map_err(|e| e.to_string())?;
        let value = serde_json::to_value(&export).unwrap();
        validate_schema(&value, &e.encoded)?;
        let back: hgmlm::model::AttentionExport = serde_json::from_value(value).unwrap();
        check(back == export, "export does not round-trip")?;
        checked += 1;
    }
    check(worst <= 1e-6, format!("scores sum off by {worst:e}"))?;
    // the prediction still works on the same model, so the export did not disturb it
    let first = [data.target[0].encoded.clone()];
    predict(model, &first, true, 1).map_err(|e| e.to_string())?;
    Ok(format!("{checked} entries, scores >= 0, max |sum-1| {worst:.1e}, schema valid"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("golden corpus", golden_corpus),
        ("template fidelity", template_fidelity),
        ("constrained softmax and loss", softmax_properties),
        ("gradient oracle", gradient_oracle),
        ("overfit", overfit),
        ("structure-only learning", structure_only),
        ("constraint ablation", constraint_ablation),
        ("transfer", transfer),
        ("metrics oracles", metrics_oracles),
        ("determinism", determinism),
        ("attention export", attention_export),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({secs:.1}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
