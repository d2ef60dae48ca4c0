#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simlearn::data::{synth_generate, GroupedDataset, SynthConfig};
use simlearn::loss::{sll, sll_grad_logits};
use simlearn::nn::layers::{self, ConvGeometry};
use simlearn::nn::{Architecture, Model};
use simlearn::train::{batch_loss_and_grad, Mode};
use simlearn::{Group, GroupLayout, Hyperparameters, LabelVector, Tensor};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference norm when
/// both vectors are essentially zero.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

/// Worst relative error of the dense layer's input, weight and bias
/// gradients for a random projection objective.
pub fn check_dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, p, q) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..6));
    let x = random_tensor(&[b, p], &mut r);
    let w = random_tensor(&[p, q], &mut r);
    let bias = random_tensor(&[q], &mut r);
    let up = random_tensor(&[b, q], &mut r);
    let g = layers::dense_backward(&x, &w, &up).unwrap();
    let f = |x: &Tensor, w: &Tensor, bias: &Tensor| dot(&layers::dense_forward(x, w, bias).unwrap(), &up);
    let nx = numeric_grad(x.data(), |d| f(&with_data(&x, d), &w, &bias));
    let nw = numeric_grad(w.data(), |d| f(&x, &with_data(&w, d), &bias));
    let nb = numeric_grad(bias.data(), |d| f(&x, &w, &with_data(&bias, d)));
    rel_error(g.input.data(), &nx)
        .max(rel_error(g.weight.data(), &nw))
        .max(rel_error(g.bias.data(), &nb))
}

pub fn check_conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = r.random_range(1..4);
    let geom = ConvGeometry {
        stride: r.random_range(1..3),
        padding: r.random_range(0..2),
    };
    let (h, w) = if seed % 5 == 0 {
        (8, 8)
    } else {
        (r.random_range(k..k + 4), r.random_range(k..k + 4))
    };
    let (b, cin, cout) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..4));
    let x = random_tensor(&[b, h, w, cin], &mut r);
    let kern = random_tensor(&[k, k, cin, cout], &mut r);
    let bias = random_tensor(&[cout], &mut r);
    let out = layers::conv2d_forward(&x, &kern, &bias, geom).unwrap();
    let up = random_tensor(out.shape(), &mut r);
    let g = layers::conv2d_backward(&x, &kern, &up, geom).unwrap();
    let f = |x: &Tensor, k: &Tensor, b: &Tensor| dot(&layers::conv2d_forward(x, k, b, geom).unwrap(), &up);
    let nx = numeric_grad(x.data(), |d| f(&with_data(&x, d), &kern, &bias));
    let nk = numeric_grad(kern.data(), |d| f(&x, &with_data(&kern, d), &bias));
    let nb = numeric_grad(bias.data(), |d| f(&x, &kern, &with_data(&bias, d)));
    rel_error(g.input.data(), &nx)
        .max(rel_error(g.weight.data(), &nk))
        .max(rel_error(g.bias.data(), &nb))
}

pub fn check_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
    let x = random_tensor(&shape, &mut r);
    let up = random_tensor(&[shape[0], shape[3]], &mut r);
    let g = layers::gap_backward(x.shape(), &up).unwrap();
    let n = numeric_grad(x.data(), |d| dot(&layers::gap_forward(&with_data(&x, d)).unwrap(), &up));
    rel_error(g.data(), &n)
}

/// ReLU away from its kink, where the derivative is defined.
pub fn check_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..20);
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(0.01..1.0);
            if r.random_bool(0.5) { v } else { -v }
        })
        .collect();
    let x = Tensor::new(vec![1, n], data).unwrap();
    let up = random_tensor(&[1, n], &mut r);
    let g = layers::relu_backward(&x, &up).unwrap();
    let num = numeric_grad(x.data(), |d| dot(&layers::relu_forward(&with_data(&x, d)), &up));
    rel_error(g.data(), &num)
}

/// Dropout with a fixed mask is linear in its input.
pub fn check_dropout(seed: u64) -> f64 {
    let mut r = rng(seed);
    let rate = r.random_range(0.0..0.9);
    let x = random_tensor(&[2, 7], &mut r);
    let (_, mask) = layers::dropout_forward(&x, rate, &mut rng(seed + 1), true).unwrap();
    let up = random_tensor(&[2, 7], &mut r);
    let g = layers::dropout_backward(&mask, rate, &up).unwrap();
    let num = numeric_grad(x.data(), |d| {
        let (y, _) = layers::dropout_forward(&with_data(&x, d), rate, &mut rng(seed + 1), true).unwrap();
        dot(&y, &up)
    });
    rel_error(g.data(), &num)
}

pub fn random_hyper(r: &mut impl Rng) -> Hyperparameters {
    Hyperparameters::new(r.random_range(0.0..=1.0), r.random_range(0.0..2.0), r.random_range(0.0..2.0))
        .unwrap()
}

pub fn random_label(layout: GroupLayout, r: &mut impl Rng) -> LabelVector {
    let group = if r.random_bool(0.5) { Group::Target } else { Group::Auxiliary };
    let class = r.random_range(0..layout.class_count(group));
    LabelVector::one_hot(layout, group, class).unwrap()
}

pub fn check_sll(seed: u64) -> f64 {
    let mut r = rng(seed);
    let layout = GroupLayout::new(r.random_range(1..6), r.random_range(1..6)).unwrap();
    let h = random_hyper(&mut r);
    let y = random_label(layout, &mut r);
    let z: Vec<f64> = (0..layout.n()).map(|_| r.random_range(-3.0..3.0)).collect();
    let analytic = sll_grad_logits(y.values(), &z, layout, &h).unwrap();
    let num = numeric_grad(&z, |z| sll(y.values(), &layers::softmax_row(z), layout, &h).unwrap());
    rel_error(&analytic, &num)
}

pub fn toy_arch(dropout: Option<f64>) -> Architecture {
    Architecture {
        height: 6,
        width: 6,
        channels: 2,
        conv_channels: vec![3, 2],
        kernel_size: 3,
        conv_strides: vec![1, 1],
        n1: 4,
        n2: 3,
        dropout,
    }
}

/// Whole-network check: every parameter gradient of the mean SLL over a
/// random mixed batch, dropout masks held fixed.
pub fn check_model(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, m) = (3, 2);
    let mut model = Model::init(toy_arch(Some(0.3)).build(k).unwrap(), &mut r)
        .unwrap()
        .extend_multi_group(m, &mut r)
        .unwrap();
    // Zero biases put dead units exactly on the ReLU kink.
    for t in model.params_mut().tensors_mut().filter(|t| t.shape().len() == 1) {
        for v in t.data_mut() {
            *v = r.random_range(0.05..0.3);
        }
    }
    let layout = model.layout();
    let h = random_hyper(&mut r);
    let b = 3;
    let input = random_tensor(&[b, 6, 6, 2], &mut r);
    let labels: Vec<LabelVector> = (0..b).map(|_| random_label(layout, &mut r)).collect();
    let batch = simlearn::data::Batch {
        inputs: input.clone(),
        labels: labels.clone(),
        provenance: Vec::new(),
    };
    let loss_of = |model: &Model| {
        let pass = model.forward(&input, Some(&mut rng(seed + 7))).unwrap();
        batch_loss_and_grad(Mode::Simultaneous, &h, model, &batch, &pass.probabilities).unwrap()
    };
    let pass = model.forward(&input, Some(&mut rng(seed + 7))).unwrap();
    let (_, logit_grad) =
        batch_loss_and_grad(Mode::Simultaneous, &h, &model, &batch, &pass.probabilities).unwrap();
    let grads = model.backward(&pass, &logit_grad).unwrap();

    let mut worst: f64 = 0.0;
    let n_tensors = model.params().tensors().count();
    for t in 0..n_tensors {
        let base = model.params().tensors().nth(t).unwrap().data().to_vec();
        let num = numeric_grad(&base, |d| {
            let mut probe = model.clone();
            probe.params_mut().tensors_mut().nth(t).unwrap().data_mut().copy_from_slice(d);
            loss_of(&probe).0
        });
        let analytic = grads.params.tensors().nth(t).unwrap().data();
        worst = worst.max(rel_error(analytic, &num));
    }
    worst
}

/// Small noisy synthetic problem shared by the trainer tests.
pub fn small_dataset(seed: u64) -> GroupedDataset {
    let mut cfg = SynthConfig::new(3, 4);
    cfg.height = 8;
    cfg.width = 8;
    cfg.train_per_class = 12;
    cfg.val_per_class = 4;
    cfg.test_per_class = 6;
    cfg.aux_per_class = 10;
    cfg.noise = 0.3;
    synth_generate(&cfg, seed).unwrap()
}

pub fn small_arch(dropout: Option<f64>) -> Architecture {
    Architecture {
        height: 8,
        width: 8,
        channels: 1,
        conv_channels: vec![3],
        kernel_size: 3,
        conv_strides: vec![2],
        n1: 6,
        n2: 5,
        dropout,
    }
}

pub fn random_simplex(n: usize, r: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(1e-3..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Largest absolute deviation across the three loss-reduction identities
/// for one random draw. Exact equality is expected, so this should be 0.
pub fn loss_identity_gap(seed: u64) -> f64 {
    use simlearn::loss::{cce, weighted_group_loss, wgcc};
    let mut r = rng(seed);
    let layout = GroupLayout::new(r.random_range(1..8), r.random_range(1..8)).unwrap();
    let yhat = random_simplex(layout.n(), &mut r);
    let lambda: f64 = r.random_range(0.0..=1.0);
    let k = layout.k;
    let mut gap: f64 = 0.0;

    let t = LabelVector::one_hot(layout, Group::Target, r.random_range(0..k)).unwrap();
    let restricted = cce(&t.values()[..k], &yhat[..k]).unwrap();
    gap = gap.max((wgcc(t.values(), &yhat, layout, 1.0).unwrap() - restricted).abs());

    let y = random_label(layout, &mut r);
    let restricted = cce(&y.values()[..k], &yhat[..k]).unwrap();
    let plain = Hyperparameters::new(1.0, 0.0, 0.0).unwrap();
    gap = gap.max((sll(y.values(), &yhat, layout, &plain).unwrap() - restricted).abs());

    let groups = [layout.target_range(), layout.aux_range()];
    let weighted = weighted_group_loss(y.values(), &yhat, &groups, &[lambda, 1.0 - lambda]).unwrap();
    gap.max((weighted - wgcc(y.values(), &yhat, layout, lambda).unwrap()).abs())
}

/// Counts violations of the group-penalty bounds over `pairs` random
/// one-hot/simplex pairs: range `[0, max(alpha, beta)]`, zero when all
/// predicted mass stays in the label's group, zero on auxiliary labels
/// when `beta = 0`.
pub fn penalty_violations(pairs: usize, seed: u64) -> usize {
    use simlearn::loss::group_penalty;
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..pairs {
        let layout = GroupLayout::new(r.random_range(1..8), r.random_range(1..8)).unwrap();
        let (alpha, beta) = (r.random_range(0.0..3.0), r.random_range(0.0..3.0));
        let y = random_label(layout, &mut r);
        let yhat = random_simplex(layout.n(), &mut r);
        let gp = group_penalty(y.values(), &yhat, layout, alpha, beta).unwrap();
        if !(0.0..=alpha.max(beta) + 1e-12).contains(&gp) {
            bad += 1;
        }
        let mut inside = vec![0.0; layout.n()];
        let range = layout.range(y.group());
        let part = random_simplex(range.len(), &mut r);
        inside[range].copy_from_slice(&part);
        if group_penalty(y.values(), &inside, layout, alpha, beta).unwrap() != 0.0 {
            bad += 1;
        }
        if y.group() == Group::Auxiliary
            && group_penalty(y.values(), &yhat, layout, alpha, 0.0).unwrap() != 0.0
        {
            bad += 1;
        }
    }
    bad
}

/// Pairwise-comparison AUC: the fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Worst gap between `roc_auc_ovr` and the pairwise oracle on one random
/// 50-sample instance. Scores are coarsely quantised so ties occur.
pub fn roc_oracle_error(seed: u64) -> f64 {
    use simlearn::metrics::roc_auc_ovr;
    let mut r = rng(seed);
    let k = r.random_range(2..6);
    let classes: Vec<usize> = (0..50).map(|_| r.random_range(0..k)).collect();
    let quantum = if r.random_bool(0.5) { 0.1 } else { 1e-9 };
    let scores: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..k).map(|_| (r.random_range(0.0..1.0f64) / quantum).round() * quantum).collect())
        .collect();
    let got = roc_auc_ovr(&scores, &classes, k).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let pos: Vec<bool> = classes.iter().map(|&y| y == c).collect();
        match (pairwise_auc(&col, &pos), got.per_class[c]) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    worst
}

/// Textbook single-pass Pearson coefficient.
pub fn pearson_oracle(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let (su, sv): (f64, f64) = (u.iter().sum(), v.iter().sum());
    let suv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let suu: f64 = u.iter().map(|a| a * a).sum();
    let svv: f64 = v.iter().map(|b| b * b).sum();
    (n * suv - su * sv) / ((n * suu - su * su).sqrt() * (n * svv - sv * sv).sqrt())
}

/// Mean absolute pairwise Pearson coefficient, by brute force.
pub fn mean_abs_corr_oracle(vectors: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..vectors.len() {
        for j in 0..vectors.len() {
            if i < j {
                total += pearson_oracle(&vectors[i], &vectors[j]).abs();
                pairs += 1.0;
            }
        }
    }
    total / pairs
}

pub fn hand_built_vectors() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![2.0, 4.0, 6.5, 8.0, 9.5],
        vec![5.0, 3.0, 4.0, 1.0, 0.0],
        vec![0.5, 0.0, 2.5, 0.0, 1.0],
    ]
}

/// Tiny random conv model with a `k + m` head, for metric properties.
pub fn tiny_multi_group(seed: u64, k: usize, m: usize) -> Model {
    let mut r = rng(seed);
    Model::init(toy_arch(None).build(k).unwrap(), &mut r)
        .unwrap()
        .extend_multi_group(m, &mut r)
        .unwrap()
}

/// Per-step composition of one full simultaneous-learning epoch:
/// `(target, auxiliary, distinct auxiliary)` counts per step.
pub fn epoch_composition(seed: u64, batch_size: usize) -> (usize, Vec<(usize, usize, usize)>) {
    use simlearn::train::{StepInfo, TrainConfig, Trainer};
    let mut synth = SynthConfig::new(4, 5);
    synth.height = 8;
    synth.width = 8;
    synth.train_per_class = 40;
    synth.aux_per_class = 20;
    let ds = synth_generate(&synth, seed).unwrap();
    let model = Model::init(small_arch(None).build(ds.layout.k).unwrap(), &mut rng(seed))
        .unwrap()
        .extend_multi_group(ds.layout.m, &mut rng(seed))
        .unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size,
        learning_rate: 0.01,
        mode: Mode::Simultaneous,
        seed,
        ..TrainConfig::default()
    };
    let mut steps = Vec::new();
    let mut observe = |info: &StepInfo<'_>, _: &Model| {
        let aux: std::collections::HashSet<usize> = info
            .batch
            .provenance
            .iter()
            .filter(|p| p.group == Group::Auxiliary)
            .map(|p| p.index)
            .collect();
        steps.push((info.batch.count(Group::Target), info.batch.count(Group::Auxiliary), aux.len()));
        Ok(())
    };
    let mut trainer = Trainer::new(model, &ds, cfg).unwrap();
    trainer.run_epoch(&mut observe).unwrap();
    (ds.target_train.len(), steps)
}
