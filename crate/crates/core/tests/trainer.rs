mod common;

use simlearn::data::{
    epoch_plan, synth_generate, target_batch, Batch, GroupedDataset, Provenance, SynthConfig,
};
use simlearn::loss::cce_batch;
use simlearn::nn::{Architecture, Model};
use simlearn::train::{
    batch_loss_and_grad, checkpoint_load, checkpoint_save, epoch_rng, train, Mode, OptimizerKind,
    OptimizerState, StepInfo, TrainConfig, Trainer,
};
use simlearn::{Error, Group, Hyperparameters, Tensor};

fn noiseless(seed: u64) -> GroupedDataset {
    let mut c = SynthConfig::new(3, 4);
    c.height = 8;
    c.width = 8;
    c.noise = 0.0;
    c.train_per_class = 60;
    c.aux_per_class = 20;
    synth_generate(&c, seed).unwrap()
}

fn tiny_arch() -> Architecture {
    Architecture {
        height: 8,
        width: 8,
        channels: 1,
        conv_channels: vec![4],
        kernel_size: 3,
        conv_strides: vec![1],
        n1: 8,
        n2: 8,
        dropout: None,
    }
}

fn sl_model(arch: &Architecture, ds: &GroupedDataset, seed: u64) -> Model {
    let mut r = common::rng(seed);
    Model::init(arch.build(ds.layout.k).unwrap(), &mut r)
        .unwrap()
        .extend_multi_group(ds.layout.m, &mut r)
        .unwrap()
}

fn sl_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 0.02,
        mode: Mode::Simultaneous,
        hyper: Hyperparameters::new(0.6, 1.0, 1.0).unwrap(),
        seed,
        ..TrainConfig::default()
    }
}

/// Every target and auxiliary training sample in one batch.
fn whole_training_set(ds: &GroupedDataset, model: &Model) -> Batch {
    let provenance = (0..ds.target_train.len())
        .map(|index| Provenance {
            group: Group::Target,
            index,
        })
        .chain((0..ds.aux_pool.len()).map(|index| Provenance {
            group: Group::Auxiliary,
            index,
        }))
        .collect();
    Batch::gather(model.layout(), &ds.target_train, &ds.aux_pool, provenance).unwrap()
}

#[test]
fn training_loss_decreases_over_the_first_ten_steps() {
    for seed in 0..5 {
        let ds = noiseless(seed);
        let model = sl_model(&tiny_arch(), &ds, seed);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 32,
            learning_rate: 0.01,
            mode: Mode::Simultaneous,
            seed,
            ..TrainConfig::default()
        };
        let reference = whole_training_set(&ds, &model);
        let hyper = cfg.hyper;
        let objective = |m: &Model| {
            let pass = m.forward(&reference.inputs, None).unwrap();
            batch_loss_and_grad(Mode::Simultaneous, &hyper, m, &reference, &pass.probabilities)
                .unwrap()
                .0
        };
        let mut losses = vec![objective(&model)];
        let mut observe = |_: &StepInfo<'_>, m: &Model| {
            losses.push(objective(m));
            Ok(())
        };
        let mut trainer = Trainer::new(model, &ds, cfg).unwrap();
        trainer.run_epoch(&mut observe).unwrap();
        assert!(losses.len() > 10, "seed {seed}: only {} steps", losses.len() - 1);
        for (i, w) in losses[..11].windows(2).enumerate() {
            assert!(w[1] < w[0], "seed {seed}, step {}: {} -> {}", i + 1, w[0], w[1]);
        }
    }
}

#[test]
fn baseline_mode_matches_a_plain_cross_entropy_loop() {
    let seed = 3;
    let ds = common::small_dataset(seed);
    let arch = common::small_arch(None);
    let init = Model::init(arch.build(ds.layout.k).unwrap(), &mut common::rng(seed)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        learning_rate: 0.05,
        mode: Mode::Baseline,
        hyper: Hyperparameters::new(1.0, 0.0, 0.0).unwrap(),
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(init.clone(), &ds, cfg.clone()).unwrap();

    let mut model = init;
    let layout = model.layout();
    let mut opt = OptimizerState::new(OptimizerKind::Adagrad, cfg.learning_rate, model.params()).unwrap();
    let mut trace = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut rng = epoch_rng(seed, epoch);
        for ids in epoch_plan(ds.target_train.len(), cfg.batch_size, true, &mut rng).unwrap() {
            let batch = target_batch(layout, &ds.target_train, &ids).unwrap();
            let pass = model.forward(&batch.inputs, Some(&mut rng)).unwrap();
            let rows: Vec<&[f64]> = pass.probabilities.rows().collect();
            trace.push(cce_batch(&batch.labels, &rows).unwrap());
            let b = batch.len() as f64;
            let mut grad = pass.probabilities.clone();
            for (i, y) in batch.labels.iter().enumerate() {
                for (g, t) in grad.row_mut(i).iter_mut().zip(y.values()) {
                    *g = (*g - t) / b;
                }
            }
            let grads = model.backward(&pass, &grad).unwrap();
            opt.apply(model.params_mut(), &grads.params).unwrap();
        }
    }
    assert_eq!(outcome.step_losses, trace);
    assert!(outcome.final_model.params().bitwise_eq(model.params()));
}

#[test]
fn stripped_baseline_reproduces_target_logit_gradients_when_auxiliary_mass_vanishes() {
    let seed = 11;
    let ds = common::small_dataset(seed);
    let mut multi = sl_model(&common::small_arch(None), &ds, seed);
    // Auxiliary logits far below the target ones: their softmax mass
    // underflows to zero and the coupling term disappears.
    let head = multi.spec().head_index();
    let k = ds.layout.k;
    let bias = &mut multi.params_mut().layer_mut(head).unwrap().bias;
    for b in &mut bias.data_mut()[k..] {
        *b = -1000.0;
    }
    let stripped = multi.strip_auxiliary_head().unwrap();
    let ids: Vec<usize> = (0..6).collect();
    let full_batch = target_batch(multi.layout(), &ds.target_train, &ids).unwrap();
    let k_batch = target_batch(stripped.layout(), &ds.target_train, &ids).unwrap();
    let plain = Hyperparameters::new(1.0, 0.0, 0.0).unwrap();

    let pass = multi.forward(&full_batch.inputs, None).unwrap();
    let (_, g_full) =
        batch_loss_and_grad(Mode::Simultaneous, &plain, &multi, &full_batch, &pass.probabilities).unwrap();
    let pass = stripped.forward(&k_batch.inputs, None).unwrap();
    let (_, g_base) =
        batch_loss_and_grad(Mode::Baseline, &plain, &stripped, &k_batch, &pass.probabilities).unwrap();
    for (full, base) in g_full.rows().zip(g_base.rows()) {
        for (a, b) in full[..k].iter().zip(base) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!(full[k..].iter().all(|g| g.abs() < 1e-15));
    }
}

#[test]
fn same_seed_same_history() {
    let ds = common::small_dataset(5);
    let arch = common::small_arch(Some(0.3));
    let run = || train(sl_model(&arch, &ds, 5), &ds, sl_config(5, 3)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.step_losses, b.step_losses);
    assert!(a.final_model.params().bitwise_eq(b.final_model.params()));
    let c = train(sl_model(&arch, &ds, 5), &ds, sl_config(6, 3)).unwrap();
    assert_ne!(a.step_losses, c.step_losses);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let ds = common::small_dataset(8);
    let arch = common::small_arch(Some(0.2));
    let full = train(sl_model(&arch, &ds, 8), &ds, sl_config(8, 4)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let mut first = Trainer::new(sl_model(&arch, &ds, 8), &ds, sl_config(8, 4)).unwrap();
    let mut noop = |_: &StepInfo<'_>, _: &Model| Ok(());
    first.run_epoch(&mut noop).unwrap();
    first.run_epoch(&mut noop).unwrap();
    checkpoint_save(&first.checkpoint(), &path).unwrap();
    drop(first);

    let resumed = Trainer::resume(checkpoint_load(&path).unwrap(), &ds, sl_config(8, 4))
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(resumed.history.len(), 2);
    assert_eq!(resumed.history[..], full.history[2..]);
    assert_eq!(resumed.step_losses.last(), full.step_losses.last());
    assert!(resumed.final_model.params().bitwise_eq(full.final_model.params()));
}

#[test]
fn every_step_is_half_target_half_auxiliary_without_repeats() {
    let (train_len, steps) = common::epoch_composition(2, 32);
    assert_eq!(steps.len(), train_len / 16);
    for (i, &(t, a, distinct)) in steps.iter().enumerate() {
        assert_eq!((t, a, distinct), (16, 16, 16), "step {}", i + 1);
    }
}

#[test]
fn audit_counters_cover_the_whole_run() {
    let ds = common::small_dataset(4);
    let cfg = sl_config(4, 2);
    let out = train(sl_model(&common::small_arch(None), &ds, 4), &ds, cfg).unwrap();
    let per_epoch = ds.target_train.len() / 8;
    assert_eq!(out.audit.steps, 2 * per_epoch);
    assert_eq!(out.audit.target_samples, 2 * per_epoch * 8);
    assert_eq!(out.audit.aux_samples, 2 * per_epoch * 8);
    assert_eq!(out.audit.unbalanced_steps, 0);
    assert_eq!(out.audit.duplicate_aux_steps, 0);
    assert_eq!(out.step_losses.len(), out.audit.steps);
}

#[test]
fn history_has_one_entry_per_epoch_and_best_model_follows_validation() {
    let ds = common::small_dataset(9);
    let out = train(sl_model(&common::small_arch(None), &ds, 9), &ds, sl_config(9, 6)).unwrap();
    assert_eq!(out.history.len(), 6);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, h) in out.history.iter().enumerate() {
        assert_eq!(h.epoch, i + 1);
        assert!(h.train_loss.is_finite() && h.train_loss > 0.0);
        let v = h.val_dacc.expect("dataset has a validation split");
        assert!((0.0..=1.0).contains(&v));
        if v > best.0 {
            best = (v, h.epoch);
        }
    }
    assert_eq!(out.best_epoch, best.1);
    let layout = out.best_model.layout();
    let probs = simlearn::metrics::predict_samples(&out.best_model, &ds.target_val, 16).unwrap();
    let labels: Vec<_> = ds.target_val.iter().map(|s| s.label(layout).unwrap()).collect();
    assert_eq!(simlearn::metrics::dacc(&probs, &labels, layout).unwrap(), best.0);
}

#[test]
fn divergence_names_epoch_and_step() {
    let ds = common::small_dataset(1);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e300,
        ..sl_config(1, 2)
    };
    match train(sl_model(&common::small_arch(None), &ds, 1), &ds, cfg) {
        Err(Error::Divergence { epoch, step, .. }) => {
            assert_eq!(epoch, 1);
            assert!(step >= 1);
            let msg = Error::Divergence { epoch, step, loss: f64::NAN }.to_string();
            assert!(msg.contains(&epoch.to_string()) && msg.contains(&step.to_string()), "{msg}");
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn head_width_must_match_the_mode() {
    let ds = common::small_dataset(0);
    let arch = common::small_arch(None);
    let base = Model::init(arch.build(ds.layout.k).unwrap(), &mut common::rng(0)).unwrap();
    let multi = sl_model(&arch, &ds, 0);
    assert!(train(base.clone(), &ds, sl_config(0, 1)).is_err());
    let baseline = TrainConfig {
        mode: Mode::Baseline,
        ..sl_config(0, 1)
    };
    assert!(train(multi, &ds, baseline.clone()).is_err());
    let dropout = TrainConfig {
        mode: Mode::Dropout { rate: 0.5 },
        ..baseline
    };
    assert!(train(base, &ds, dropout).is_err());
    let mut bad = ds.clone();
    for s in &mut bad.target_train {
        s.features = Tensor::zeros(&[4, 4, 1]);
    }
    let m = Model::init(arch.build(ds.layout.k).unwrap(), &mut common::rng(0)).unwrap();
    let cfg = TrainConfig {
        mode: Mode::Baseline,
        ..sl_config(0, 1)
    };
    assert!(train(m, &bad, cfg).is_err());
}
