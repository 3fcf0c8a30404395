use hgmlm::model::{constrained_log_probs, Batch, Dropout, Model, ModelConfig};
use hgmlm::tokenizer::{EncodedEntry, PAD_ID};

fn micro_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        max_len: 12,
        layers: 1,
        heads: 1,
        dim: 8,
        ffn: 16,
        dropout: 0.0,
        layer_norm_eps: 1e-5,
        init_std: 0.5,
    }
}

fn entry(ids: &[u32], mask_pos: usize, candidates: &[u32], target: usize) -> EncodedEntry {
    EncodedEntry {
        ids: ids.to_vec(),
        mask_pos,
        candidates: candidates.to_vec(),
        target,
    }
}

fn sample_entries() -> Vec<EncodedEntry> {
    vec![
        entry(&[7, 8, 3, 9, 2, 10], 4, &[4, 5, 6], 1),
        entry(&[11, 2, 12, 13], 1, &[4, 5, 6], 2),
        entry(&[2, 14, 15, 16, 17, 3, 18], 0, &[4, 6], 0),
    ]
}

// Straightforward scalar re-implementation of the network, used as an oracle.
mod naive {
    use hgmlm::model::{Model, Scalar};

    type M = Vec<Vec<f64>>;

    fn tensor<T: Scalar>(m: &Model<T>, name: &str) -> (Vec<usize>, Vec<f64>) {
        let t = m.params.get(name).unwrap_or_else(|| panic!("no tensor {name}"));
        (t.shape().to_vec(), t.iter().map(|x| x.to_f64().unwrap()).collect())
    }

    fn mat<T: Scalar>(m: &Model<T>, name: &str) -> M {
        let (shape, data) = tensor(m, name);
        data.chunks(shape[1]).map(|r| r.to_vec()).collect()
    }

    fn vec1<T: Scalar>(m: &Model<T>, name: &str) -> Vec<f64> {
        tensor(m, name).1
    }

    fn affine(x: &M, w: &M, b: &[f64]) -> M {
        x.iter()
            .map(|row| {
                (0..b.len())
                    .map(|j| b[j] + row.iter().enumerate().map(|(i, v)| v * w[i][j]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    fn norm(x: &M, g: &[f64], b: &[f64], eps: f64) -> M {
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                row.iter()
                    .enumerate()
                    .map(|(i, v)| (v - mean) / (var + eps).sqrt() * g[i] + b[i])
                    .collect()
            })
            .collect()
    }

    fn gelu(u: f64) -> f64 {
        0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh())
    }

    /// Candidate logits at the mask of a pad-free sequence.
    pub fn logits<T: Scalar>(m: &Model<T>, ids: &[u32], mask_pos: usize, candidates: &[u32]) -> Vec<f64> {
        let c = &m.config;
        let eps = c.layer_norm_eps;
        let tok = mat(m, "embed.token");
        let pos = mat(m, "embed.position");
        let n = ids.len();
        let mut x: M = (0..n)
            .map(|i| (0..c.dim).map(|d| tok[ids[i] as usize][d] + pos[i][d]).collect())
            .collect();
        let dh = c.dim / c.heads;
        for l in 0..c.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let a = norm(&x, &vec1(m, &p("ln1.gain")), &vec1(m, &p("ln1.bias")), eps);
            let q = affine(&a, &mat(m, &p("attn.wq")), &vec1(m, &p("attn.bq")));
            let k = affine(&a, &mat(m, &p("attn.wk")), &vec1(m, &p("attn.bk")));
            let v = affine(&a, &mat(m, &p("attn.wv")), &vec1(m, &p("attn.bv")));
            let mut ctx = vec![vec![0.0; c.dim]; n];
            for h in 0..c.heads {
                for i in 0..n {
                    let scores: Vec<f64> = (0..n)
                        .map(|j| {
                            (0..dh).map(|d| q[i][h * dh + d] * k[j][h * dh + d]).sum::<f64>() / (dh as f64).sqrt()
                        })
                        .collect();
                    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
                    for j in 0..n {
                        let w = (scores[j] - mx).exp() / z;
                        for d in 0..dh {
                            ctx[i][h * dh + d] += w * v[j][h * dh + d];
                        }
                    }
                }
            }
            let o = affine(&ctx, &mat(m, &p("attn.wo")), &vec1(m, &p("attn.bo")));
            for i in 0..n {
                for d in 0..c.dim {
                    x[i][d] += o[i][d];
                }
            }
            let b = norm(&x, &vec1(m, &p("ln2.gain")), &vec1(m, &p("ln2.bias")), eps);
            let u = affine(&b, &mat(m, &p("ffn.w1")), &vec1(m, &p("ffn.b1")));
            let g: M = u.iter().map(|r| r.iter().map(|&z| gelu(z)).collect()).collect();
            let f = affine(&g, &mat(m, &p("ffn.w2")), &vec1(m, &p("ffn.b2")));
            for i in 0..n {
                for d in 0..c.dim {
                    x[i][d] += f[i][d];
                }
            }
        }
        let h = norm(
            &vec![x[mask_pos].clone()],
            &vec1(m, "final_ln.gain"),
            &vec1(m, "final_ln.bias"),
            eps,
        );
        let bias = vec1(m, "head.bias");
        candidates
            .iter()
            .map(|&cid| bias[cid as usize] + (0..c.dim).map(|d| h[0][d] * tok[cid as usize][d]).sum::<f64>())
            .collect()
    }
}

#[test]
fn forward_matches_scalar_oracle() {
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        ..micro_config()
    };
    let model = Model::<f64>::new(config.clone(), 3).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries, &config).unwrap();
    let hidden = model.mask_hidden(&batch);
    for (i, e) in entries.iter().enumerate() {
        let got = model.candidate_logits(hidden.row(i), &e.candidates);
        let want = naive::logits(&model, &e.ids, e.mask_pos, &e.candidates);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "entry {i}: {g} vs {w}");
        }
    }
}

#[test]
fn loss_matches_oracle_cross_entropy() {
    let config = micro_config();
    let model = Model::<f64>::new(config.clone(), 9).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries, &config).unwrap();
    let mut want = 0.0;
    for e in &entries {
        let z = naive::logits(&model, &e.ids, e.mask_pos, &e.candidates);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        want += lse - z[e.target];
    }
    want /= entries.len() as f64;
    assert!((model.loss(&batch).unwrap() - want).abs() < 1e-10);
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// parameters, with central differences of step `eps`.
fn max_gradient_error(model: &Model<f64>, batch: &Batch, eps: f64, floor: f64) -> f64 {
    let (_, grads) = model.loss_and_grad(batch, None).unwrap();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for t in 0..probe.params.len() {
        for i in 0..probe.params.tensors[t].len() {
            let orig = probe.params.tensors[t].as_slice().unwrap()[i];
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig + eps;
            let up = probe.loss(batch).unwrap();
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig - eps;
            let down = probe.loss(batch).unwrap();
            probe.params.tensors[t].as_slice_mut().unwrap()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors[t].as_slice().unwrap()[i];
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let config = micro_config();
    let model = Model::<f64>::new(config.clone(), 1).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries, &config).unwrap();
    let err = max_gradient_error(&model, &batch, 1e-3, 1e-8);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradients_match_with_multiple_heads_and_layers() {
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        ..micro_config()
    };
    let model = Model::<f64>::new(config.clone(), 2).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries, &config).unwrap();
    // deeper and more curved: smaller step, and a floor so that near-zero
    // entries are judged on absolute error
    let err = max_gradient_error(&model, &batch, 1e-4, 1e-6);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn zero_weights_give_uniform_candidates() {
    let config = ModelConfig {
        init_std: 0.0,
        ..micro_config()
    };
    let model = Model::<f64>::new(config.clone(), 0).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries[..1], &config).unwrap();
    let h = model.mask_hidden(&batch);
    let logits = model.candidate_logits(h.row(0), &entries[0].candidates);
    let lp = constrained_log_probs(&logits, &[0, 1, 2]).unwrap();
    for l in lp {
        assert!((l + 3f64.ln()).abs() < 1e-12);
    }
    assert!((model.loss(&batch).unwrap() - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn padding_does_not_change_the_output() {
    let config = micro_config();
    let model = Model::<f64>::new(config.clone(), 4).unwrap();
    let plain = entry(&[7, 8, 3, 2, 10], 3, &[4, 5], 0);
    let padded = entry(&[7, PAD_ID, 8, 3, 2, 10, PAD_ID, PAD_ID], 4, &[4, 5], 0);
    let a = model.mask_hidden(&Batch::from_entries([&plain], &config).unwrap());
    let b = model.mask_hidden(&Batch::from_entries([&padded], &config).unwrap());
    assert_eq!(a, b);
}

#[test]
fn duplicated_batch_has_the_same_gradient() {
    let config = micro_config();
    let model = Model::<f64>::new(config.clone(), 6).unwrap();
    let entries = sample_entries();
    let once = Batch::from_entries(&entries, &config).unwrap();
    let twice = Batch::from_entries(entries.iter().chain(&entries), &config).unwrap();
    let (l1, g1) = model.loss_and_grad(&once, None).unwrap();
    let (l2, g2) = model.loss_and_grad(&twice, None).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn dropout_is_reproducible_and_step_dependent() {
    let config = ModelConfig {
        dropout: 0.3,
        ..micro_config()
    };
    let model = Model::<f64>::new(config.clone(), 6).unwrap();
    let batch = Batch::from_entries(&sample_entries(), &config).unwrap();
    let d = |step| Dropout {
        rate: 0.3,
        seed: 11,
        step,
    };
    let (a, ga) = model.loss_and_grad(&batch, Some(&d(1))).unwrap();
    let (b, gb) = model.loss_and_grad(&batch, Some(&d(1))).unwrap();
    let (c, _) = model.loss_and_grad(&batch, Some(&d(2))).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
    assert_ne!(a, c);
}

#[test]
fn attention_rows_are_distributions_over_real_tokens() {
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        ..micro_config()
    };
    let model = Model::<f32>::new(config, 8).unwrap();
    let ids = [7, 8, PAD_ID, 9, 2, PAD_ID];
    let maps = model.attention(&ids).unwrap();
    assert_eq!(maps.layers.len(), 2);
    for layer in &maps.layers {
        assert_eq!(layer.shape(), &[2, 6, 6]);
        for h in 0..2usize {
            for q in 0..6usize {
                let row = layer.slice(ndarray::s![h, q, ..]);
                assert!(row.iter().all(|&w| w >= 0.0));
                if ids[q] == PAD_ID {
                    assert_eq!(row.sum(), 0.0);
                } else {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                    assert_eq!(row[2], 0.0);
                    assert_eq!(row[5], 0.0);
                }
            }
        }
    }
}

#[test]
fn batch_rejects_malformed_sequences() {
    let config = micro_config();
    assert!(Batch::from_entries([&entry(&[7, 8], 5, &[4], 0)], &config).is_err());
    assert!(Batch::from_entries([&entry(&[7, PAD_ID], 1, &[4], 0)], &config).is_err());
    assert!(Batch::from_entries([&entry(&[7, 2], 1, &[4], 1)], &config).is_err());
    assert!(Batch::from_entries([&entry(&[7, 2], 1, &[40], 0)], &config).is_err());
    assert!(Batch::from_entries([&entry(&[2; 13], 1, &[4], 0)], &config).is_err());
    let empty: [&EncodedEntry; 0] = [];
    assert!(Batch::from_entries(empty, &config).is_err());
}

#[test]
fn single_token_attention_is_one() {
    let config = micro_config();
    let model = Model::<f64>::new(config, 1).unwrap();
    let vocab = hgmlm::tokenizer::Vocab::build(["<a>"], ["x y z"], 1).unwrap();
    let e = entry(&[PAD_ID, 2, PAD_ID], 1, &[4], 0);
    let export = hgmlm::model::export_attention(&model, &vocab, &e).unwrap();
    assert_eq!(export.tokens.len(), 1);
    assert_eq!(export.tokens[0].token, "<mask>");
    assert!((export.tokens[0].score - 1.0).abs() < 1e-12);
    export.validate(1e-6).unwrap();
}

#[test]
fn hand_sized_model_matches_oracle() {
    let config = ModelConfig {
        vocab_size: 6,
        max_len: 3,
        layers: 1,
        heads: 1,
        dim: 2,
        ffn: 3,
        dropout: 0.0,
        layer_norm_eps: 1e-5,
        init_std: 0.7,
    };
    let model = Model::<f64>::new(config.clone(), 12).unwrap();
    let e = entry(&[5, 2, 4], 1, &[4, 5], 0);
    let batch = Batch::from_entries([&e], &config).unwrap();
    let h = model.mask_hidden(&batch);
    let got = model.candidate_logits(h.row(0), &e.candidates);
    let want = naive::logits(&model, &e.ids, e.mask_pos, &e.candidates);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn unused_embedding_rows_get_no_gradient() {
    let config = micro_config();
    let model = Model::<f64>::new(config.clone(), 5).unwrap();
    let entries = sample_entries();
    let batch = Batch::from_entries(&entries, &config).unwrap();
    let (_, g) = model.loss_and_grad(&batch, None).unwrap();
    let tok = g.get("embed.token").unwrap();
    let used: std::collections::BTreeSet<u32> = entries
        .iter()
        .flat_map(|e| e.ids.iter().chain(&e.candidates).copied())
        .collect();
    for row in 0..20u32 {
        let norm: f64 = (0..8).map(|d| tok[[row as usize, d]].abs()).sum();
        assert_eq!(norm == 0.0, !used.contains(&row), "row {row}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let config = ModelConfig {
        dropout: 0.0,
        ..micro_config()
    };
    let model = Model::<f32>::new(config.clone(), 5).unwrap();
    let ck = hgmlm::model::Checkpoint {
        model: model.clone(),
        optimizer: None,
    };
    let back = hgmlm::model::Checkpoint::<f32>::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    let batch = Batch::from_entries(&sample_entries(), &config).unwrap();
    assert_eq!(model.mask_hidden(&batch), back.model.mask_hidden(&batch));
}

#[test]
fn loss_falls_below_five_percent_after_300_steps() {
    use hgmlm::model::{TrainConfig, Trainer};
    let config = ModelConfig {
        vocab_size: 40,
        max_len: 16,
        layers: 1,
        heads: 2,
        dim: 16,
        ffn: 32,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let data: Vec<EncodedEntry> = (0..32u32)
        .map(|i| entry(&[8 + i, 2, 7, 8 + (i * 7) % 32], 1, &[4, 5, 6], (i % 3) as usize))
        .collect();
    let model = Model::<f32>::new(config.clone(), 0).unwrap();
    let batch = Batch::from_entries(&data, &config).unwrap();
    let initial = model.loss(&batch).unwrap();
    let tc = TrainConfig {
        lr: 1e-2,
        batch_size: 32,
        epochs: 300,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, tc).unwrap();
    trainer.fit(&data, |_, _| std::ops::ControlFlow::Continue(())).unwrap();
    assert_eq!(trainer.optimizer.step, 300);
    let last = trainer.model.loss(&batch).unwrap();
    assert!(last < 0.05 * initial, "{initial} -> {last}");
}
