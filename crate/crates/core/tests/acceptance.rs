//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 and 10 are deterministic properties and decide the exit
//! status. Criteria 8 and 9 are desk-scale trend reproductions; their lines
//! are reported as measured. Set `SIMLEARN_SKIP_TREND=1` to skip the trend
//! run (several minutes on one core).

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use simlearn::data::Sample;
use simlearn::experiment::{lambda_sweep, prepare_dataset, run_experiment, ExperimentConfig, RunKind};
use simlearn::interpret::{class_channel_vector, layer_correlation, pairwise_correlation};
use simlearn::metrics::{accuracy, dacc, predict_samples};
use simlearn::nn::{Architecture, Model};
use simlearn::{Group, LabelVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let suites: [(&str, u64, fn(u64) -> f64); 7] = [
        ("dense", 25, common::check_dense),
        ("conv", 25, common::check_conv),
        ("gap", 20, common::check_gap),
        ("relu", 20, common::check_relu),
        ("dropout", 20, common::check_dropout),
        ("sll", 150, common::check_sll),
        ("model", 5, common::check_model),
    ];
    let mut cases = 0;
    let mut worst: (f64, &str) = (0.0, "");
    for (name, n, check) in suites {
        for seed in 0..n {
            let e = check(seed);
            cases += 1;
            if e > worst.0 || e.is_nan() {
                worst = (e, name);
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 < 1e-6 && cases >= 100 && t < Duration::from_secs(60),
        format!("{cases} cases, worst relative error {:.2e} ({}), {}", worst.0, worst.1, secs(t)),
    )
}

fn loss_identities() -> Outcome {
    let worst = (0..2000).map(common::loss_identity_gap).fold(0.0, f64::max);
    outcome(worst == 0.0, format!("2000 draws, largest deviation {worst:e}"))
}

fn penalty_bounds() -> Outcome {
    let bad = common::penalty_violations(10_000, 17);
    outcome(bad == 0, format!("10000 pairs, {bad} violations"))
}

fn parameter_count() -> Outcome {
    let arch = Architecture {
        height: 8,
        width: 8,
        channels: 3,
        conv_channels: vec![4],
        kernel_size: 3,
        conv_strides: vec![],
        n1: 64,
        n2: 512,
        dropout: None,
    };
    let mut r = common::rng(0);
    let base = Model::init(arch.build(7).unwrap(), &mut r).unwrap();
    let multi = base.extend_multi_group(1000, &mut r).unwrap();
    let added = multi.params().total_count() - base.params().total_count();
    outcome(added == 513_000, format!("n2=512, m=1000 adds {added} parameters"))
}

fn batch_composition() -> Outcome {
    let start = Instant::now();
    let (train_len, steps) = common::epoch_composition(0, 32);
    let t = start.elapsed();
    let bad = steps.iter().filter(|s| **s != (16, 16, 16)).count();
    let complete = steps.len() == train_len / 16;
    outcome(
        bad == 0 && complete && t < Duration::from_secs(1),
        format!("{} steps over {train_len} target samples, {bad} malformed, {}", steps.len(), secs(t)),
    )
}

fn target_samples(seed: u64, k: usize, n: usize) -> Vec<Sample> {
    let mut r = common::rng(seed);
    (0..n)
        .map(|i| Sample {
            features: common::random_tensor(&[6, 6, 2], &mut r),
            group: Group::Target,
            class_index: i % k,
        })
        .collect()
}

fn dacc_semantics() -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    let trials = 200;
    for seed in 0..trials {
        let mut r = common::rng(seed);
        let (k, m) = (r.random_range(2..6), r.random_range(1..6));
        let model = common::tiny_multi_group(seed, k, m);
        let layout = model.layout();
        let samples = target_samples(seed + 1000, k, 10);
        let labels: Vec<LabelVector> = samples.iter().map(|s| s.label(layout).unwrap()).collect();
        let probs = predict_samples(&model, &samples, 16).unwrap();
        let mut perturbed = probs.clone();
        for p in &mut perturbed {
            for v in &mut p[k..] {
                *v = r.random_range(-1e9..1e9);
            }
        }
        let full = dacc(&probs, &labels, layout).unwrap();
        if dacc(&perturbed, &labels, layout).unwrap() != full {
            failures += 1;
        }
        let stripped = model.strip_auxiliary_head().unwrap();
        let k_labels: Vec<LabelVector> =
            samples.iter().map(|s| s.label(stripped.layout()).unwrap()).collect();
        let k_probs = predict_samples(&stripped, &samples, 16).unwrap();
        if accuracy(&k_probs, &k_labels).unwrap() != full {
            failures += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        failures == 0 && t < Duration::from_secs(10),
        format!("{trials} random models, {failures} mismatches, {}", secs(t)),
    )
}

fn metric_oracles() -> Outcome {
    let roc = (0..200).map(common::roc_oracle_error).fold(0.0, f64::max);
    let vectors = common::hand_built_vectors();
    let hand = (pairwise_correlation(&vectors).unwrap().mean_abs
        - common::mean_abs_corr_oracle(&vectors))
    .abs();
    let model = common::tiny_multi_group(3, 3, 2);
    let samples = target_samples(77, 3, 12);
    let layers = model.spec().conv_indices();
    let report = layer_correlation(&model, &samples, &layers).unwrap();
    let mut end_to_end: f64 = 0.0;
    for &layer in &layers {
        let per_class: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                let own: Vec<Sample> = samples.iter().filter(|s| s.class_index == c).cloned().collect();
                class_channel_vector(&model, &own, layer).unwrap().values
            })
            .collect();
        let oracle = common::mean_abs_corr_oracle(&per_class);
        end_to_end = end_to_end.max((report.mean_abs(layer).unwrap() - oracle).abs());
    }
    let worst = roc.max(hand).max(end_to_end);
    outcome(
        worst <= 1e-12,
        format!(
            "roc_auc_ovr vs pairwise oracle {roc:.1e} (200 instances of 50), layer correlation vs brute force {:.1e}",
            hand.max(end_to_end)
        ),
    )
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn reproducibility() -> Outcome {
    let cfg_path = workspace_root().join("configs/quick.toml");
    let base = ExperimentConfig::load(&cfg_path).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bytes = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.output = d.path().to_path_buf();
        cfg.workers = i + 1;
        run_experiment(&cfg).unwrap();
        bytes.push(fs::read(d.path().join("summary.csv")).unwrap());
    }
    let runs = bytes[0].iter().filter(|&&b| b == b'\n').count() - 1;
    outcome(
        bytes[0] == bytes[1],
        format!("configs/quick.toml run twice (1 and 2 workers): summary.csv with {runs} rows byte-identical"),
    )
}

struct Trend {
    criterion8: Outcome,
    criterion9: Outcome,
}

fn trend() -> Trend {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(&workspace_root().join("configs/trend.toml")).unwrap();
    cfg.output = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_trend");
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let sweep = lambda_sweep(&cfg).unwrap();
    let elapsed = start.elapsed();

    let rows: Vec<Vec<String>> = csv::Reader::from_path(cfg.output.join("sweep.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    let num = |s: &str| s.parse::<f64>().unwrap();
    let (base_mean, base_std) = (num(&rows[0][1]), num(&rows[0][2]));
    let floor = base_mean - base_std;
    let below: Vec<&str> = rows[1..]
        .iter()
        .filter(|r| num(&r[1]) < floor)
        .map(|r| r[0].as_str())
        .collect();
    let best = sweep.best();
    let beats = best.test_dacc.mean >= sweep.baseline_test_accuracy.mean;
    let criterion8 = outcome(
        beats && below.is_empty(),
        format!(
            "{} seeds; SL (lambda {} by validation) test dacc {:.4} vs baseline test accuracy {:.4}; \
             lambda points below baseline val - 1 std ({:.4}): {:?}; {}",
            cfg.seeds.len(),
            sweep.best_lambda,
            best.test_dacc.mean,
            sweep.baseline_test_accuracy.mean,
            floor,
            below,
            secs(elapsed)
        ),
    );

    let mut wins = 0;
    let mut pairs = Vec::new();
    for &seed in &cfg.seeds {
        let model_of = |kind: RunKind| {
            &sweep
                .experiment
                .runs
                .iter()
                .find(|r| r.spec.kind == kind && r.spec.seed == seed)
                .expect("run present")
                .best_model
        };
        let ds = prepare_dataset(&cfg, seed).unwrap();
        let corr = |m: &Model| {
            let last = m.spec().last_conv_index().expect("trend model has convolutions");
            layer_correlation(m, &ds.target_test, &[last]).unwrap().layers[0].mean_abs
        };
        let (b, s) = (
            corr(model_of(RunKind::Baseline)),
            corr(model_of(RunKind::Simultaneous(sweep.best_lambda))),
        );
        if s <= b {
            wins += 1;
        }
        pairs.push(format!("{s:.3}/{b:.3}"));
    }
    let criterion9 = outcome(
        wins >= 4,
        format!(
            "last-conv mean |corr| SL/baseline per seed [{}]; SL lower in {wins} of {} seeds",
            pairs.join(", "),
            cfg.seeds.len()
        ),
    );
    Trend {
        criterion8,
        criterion9,
    }
}

fn report(n: usize, title: &str, o: &Outcome) {
    println!("criterion {n:>2} {} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let properties: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "loss identities", loss_identities),
        (3, "penalty bounds", penalty_bounds),
        (4, "parameter count", parameter_count),
        (5, "batch composition", batch_composition),
        (6, "dacc semantics", dacc_semantics),
        (7, "metric oracles", metric_oracles),
    ];
    let mut failed = Vec::new();
    let mut gate = |n: usize, title: &str, o: Outcome| {
        report(n, title, &o);
        if !o.pass {
            failed.push(n);
        }
    };
    for (n, title, check) in properties {
        gate(n, title, check());
    }
    if std::env::var_os("SIMLEARN_SKIP_TREND").is_some() {
        println!("criterion  8 SKIP trend reproduction: SIMLEARN_SKIP_TREND is set");
        println!("criterion  9 SKIP interpretability trend: SIMLEARN_SKIP_TREND is set");
    } else {
        let t = trend();
        report(8, "trend reproduction", &t.criterion8);
        report(9, "interpretability trend", &t.criterion9);
    }
    gate(10, "reproducibility", reproducibility());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed property criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
