//! Experiment orchestration: multi-seed comparisons of the baseline, dropout
//! and simultaneous-learning runs, the lambda sweep, evaluation and
//! interpretability exports. Every file written here is a pure function of
//! the configuration; nothing records wall-clock time.

mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    DatasetSource, ExperimentConfig, InterpretSection, ModesSection, TrainingSection,
    CONFIG_VERSION,
};
pub use plot::{emit_plot, render_svg, PlotStyle, Series};

use crate::data::image_dir::tensor_to_image;
use crate::data::GroupedDataset;
use crate::error::{invalid, Error, Result};
use crate::interpret::{grad_cam, layer_correlation, top_activating_aux, RankedAuxClass};
use crate::metrics::{evaluate, roc_curve, EvaluationReport};
use crate::nn::Model;
use crate::train::{checkpoint_save, Checkpoint, EpochRecord, Mode, Trainer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunKind {
    Baseline,
    Dropout(f64),
    Simultaneous(f64),
}

impl RunKind {
    pub fn mode(&self) -> Mode {
        match *self {
            RunKind::Baseline => Mode::Baseline,
            RunKind::Dropout(rate) => Mode::Dropout { rate },
            RunKind::Simultaneous(_) => Mode::Simultaneous,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            RunKind::Simultaneous(l) => Some(l),
            _ => None,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            RunKind::Baseline => "baseline",
            RunKind::Dropout(_) => "dropout",
            RunKind::Simultaneous(_) => "sl",
        }
    }

    pub fn dropout(&self) -> Option<f64> {
        match *self {
            RunKind::Dropout(rate) => Some(rate),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            RunKind::Baseline => "baseline".into(),
            RunKind::Dropout(rate) => format!("dropout{rate}"),
            RunKind::Simultaneous(l) => format!("sl{l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub kind: RunKind,
    pub seed: u64,
}

impl RunSpec {
    pub fn id(&self) -> String {
        format!("{}_seed{}", self.kind.label(), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub best_epoch: usize,
    /// Best validation delimited accuracy seen during training.
    pub val_dacc: Option<f64>,
    /// Test-set evaluation of the best-validation model.
    pub test: EvaluationReport,
    pub history: Vec<EpochRecord>,
    pub best_model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub kind: RunKind,
    pub runs: usize,
    pub val_dacc: Option<MeanStd>,
    pub test_accuracy: MeanStd,
    pub test_dacc: MeanStd,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub output: PathBuf,
    pub runs: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentSummary {
    pub fn aggregate(&self, kind: RunKind) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.kind == kind)
    }
}

/// Runs in a fixed order: seeds outermost, then baseline, dropout rates and
/// lambdas as listed.
pub fn plan_runs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let mut kinds = Vec::new();
    if cfg.modes.baseline {
        kinds.push(RunKind::Baseline);
    }
    kinds.extend(cfg.modes.dropout.iter().map(|&r| RunKind::Dropout(r)));
    kinds.extend(cfg.modes.lambdas.iter().map(|&l| RunKind::Simultaneous(l)));
    cfg.seeds
        .iter()
        .flat_map(|&seed| kinds.iter().map(move |&kind| RunSpec { kind, seed }))
        .collect()
}

/// Dataset for one seed, with the configured target-train reduction applied.
pub fn prepare_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<GroupedDataset> {
    let mut ds = cfg.dataset.load(seed)?;
    if cfg.reduce < 1.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        ds.reduce_target_train(cfg.reduce, &mut rng)?;
    }
    Ok(ds)
}

/// Initial model for a run. All kinds sharing a seed start from the same
/// base weights; the simultaneous-learning head adds fresh auxiliary columns.
pub fn initial_model(cfg: &ExperimentConfig, ds: &GroupedDataset, run: &RunSpec) -> Result<Model> {
    let mut arch = cfg.architecture.clone();
    arch.dropout = match run.kind {
        RunKind::Dropout(rate) => Some(rate),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let base = Model::init(arch.build(ds.layout.k)?, &mut rng)?;
    match run.kind {
        RunKind::Simultaneous(_) => base.extend_multi_group(ds.layout.m, &mut rng),
        _ => Ok(base),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// File-name friendly version of a class name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "train_loss", "val_dacc"])?;
    for h in history {
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), fmt_opt(h.val_dacc)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one-vs-rest ROC curves, one `roc_<class>.csv` per target class
/// with both outcomes present in the test labels.
pub fn write_roc_curves(report: &EvaluationReport, names: &[String], dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for (c, name) in names.iter().enumerate() {
        let positive: Vec<bool> = report.classes.iter().map(|&y| y == c).collect();
        if positive.iter().all(|&p| p) || !positive.iter().any(|&p| p) {
            continue;
        }
        let scores: Vec<f64> = report.target_scores.iter().map(|s| s[c]).collect();
        let path = dir.join(format!("roc_{}.csv", file_stem(name)));
        let mut w = csv_writer(&path)?;
        w.write_record(["fpr", "tpr"])?;
        for (fpr, tpr) in roc_curve(&scores, &positive) {
            w.write_record([fpr.to_string(), tpr.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Evaluates `model` on the dataset's target test split and writes
/// `evaluation.csv` plus ROC curves to `out`.
pub fn evaluate_to_dir(model: &Model, ds: &GroupedDataset, out: &Path) -> Result<EvaluationReport> {
    create_dir(out)?;
    let report = evaluate(model, &ds.target_test)?;
    let path = out.join("evaluation.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["samples", "accuracy", "dacc", "macro_auc", "inter_group_error"])?;
    w.write_record([
        report.samples.to_string(),
        report.accuracy.to_string(),
        report.dacc.to_string(),
        fmt_opt(report.macro_auc),
        report.inter_group_error_rate.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_roc_curves(&report, &ds.target_names, out)?;
    Ok(report)
}

fn execute_run(
    cfg: &ExperimentConfig,
    ds: &GroupedDataset,
    run: &RunSpec,
    out: &Path,
) -> Result<RunResult> {
    let id = run.id();
    let model = initial_model(cfg, ds, run)?;
    let tc = cfg.train_config(run.kind.mode(), run.kind.lambda().unwrap_or(1.0), run.seed);
    log::info!("{id}: training {} epochs", tc.epochs);
    let trainer = Trainer::new(model, ds, tc)?;
    let outcome = trainer.run()?;
    let run_dir = out.join("runs").join(&id);
    create_dir(&run_dir)?;
    write_history(&out.join(format!("history_{id}.csv")), &outcome.history)?;
    checkpoint_save(
        &Checkpoint {
            model: outcome.final_model.clone(),
            optimizer: Some(outcome.optimizer.clone()),
            epochs_completed: outcome.history.len(),
        },
        &run_dir.join("final.ckpt"),
    )?;
    checkpoint_save(
        &Checkpoint {
            model: outcome.best_model.clone(),
            optimizer: None,
            epochs_completed: outcome.best_epoch,
        },
        &run_dir.join("best.ckpt"),
    )?;
    let test = evaluate_to_dir(&outcome.best_model, ds, &run_dir)?;
    let val_dacc = outcome
        .history
        .iter()
        .filter_map(|h| h.val_dacc)
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
    Ok(RunResult {
        spec: *run,
        best_epoch: outcome.best_epoch,
        val_dacc,
        test,
        history: outcome.history,
        best_model: outcome.best_model,
    })
}

/// Runs every job on up to `workers` threads. Results come back in job
/// order regardless of scheduling.
fn execute_all(
    cfg: &ExperimentConfig,
    datasets: &[(u64, GroupedDataset)],
    jobs: &[RunSpec],
    out: &Path,
) -> Vec<Result<RunResult>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = cfg.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let ds = &datasets
                    .iter()
                    .find(|(s, _)| *s == job.seed)
                    .expect("dataset prepared for every seed")
                    .1;
                let result = execute_run(cfg, ds, job, out);
                if let Err(e) = &result {
                    log::error!("{}: {e}", job.id());
                }
                slots.lock().expect("result lock")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn aggregate(runs: &[RunResult]) -> Vec<Aggregate> {
    let mut kinds: Vec<RunKind> = Vec::new();
    for r in runs {
        if !kinds.contains(&r.spec.kind) {
            kinds.push(r.spec.kind);
        }
    }
    kinds
        .into_iter()
        .map(|kind| {
            let group: Vec<&RunResult> = runs.iter().filter(|r| r.spec.kind == kind).collect();
            let pick = |f: &dyn Fn(&RunResult) -> f64| {
                mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("non-empty group")
            };
            let vals: Vec<f64> = group.iter().filter_map(|r| r.val_dacc).collect();
            Aggregate {
                kind,
                runs: group.len(),
                val_dacc: mean_std(&vals),
                test_accuracy: pick(&|r| r.test.accuracy),
                test_dacc: pick(&|r| r.test.dacc),
            }
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 12] = [
    "run",
    "mode",
    "lambda",
    "dropout",
    "seed",
    "best_epoch",
    "val_dacc",
    "test_accuracy",
    "test_dacc",
    "macro_auc",
    "inter_group_error",
    "runs",
];

fn write_summary(path: &Path, runs: &[RunResult], aggregates: &[Aggregate]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in runs {
        w.write_record([
            r.spec.id(),
            r.spec.kind.mode_name().into(),
            fmt_opt(r.spec.kind.lambda()),
            fmt_opt(r.spec.kind.dropout()),
            r.spec.seed.to_string(),
            r.best_epoch.to_string(),
            fmt_opt(r.val_dacc),
            r.test.accuracy.to_string(),
            r.test.dacc.to_string(),
            fmt_opt(r.test.macro_auc),
            r.test.inter_group_error_rate.to_string(),
            "1".into(),
        ])?;
    }
    for a in aggregates {
        for (stat, get) in [
            ("mean", (|m: MeanStd| m.mean) as fn(MeanStd) -> f64),
            ("std", |m: MeanStd| m.std),
        ] {
            w.write_record([
                format!("{}_{stat}", a.kind.label()),
                a.kind.mode_name().into(),
                fmt_opt(a.kind.lambda()),
                fmt_opt(a.kind.dropout()),
                stat.to_string(),
                String::new(),
                fmt_opt(a.val_dacc.map(get)),
                get(a.test_accuracy).to_string(),
                get(a.test_dacc).to_string(),
                String::new(),
                String::new(),
                a.runs.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn prepare_all(cfg: &ExperimentConfig) -> Result<Vec<(u64, GroupedDataset)>> {
    let mut seen = Vec::new();
    for &s in &cfg.seeds {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen.into_iter()
        .map(|s| Ok((s, prepare_dataset(cfg, s)?)))
        .collect()
}

/// Trains and evaluates every (mode, seed) pair of `cfg` into
/// `cfg.output`. When a run fails the summary still lists the runs that
/// finished, and the first error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = cfg.output.clone();
    create_dir(&out)?;
    let datasets = prepare_all(cfg)?;
    let jobs = plan_runs(cfg);
    let mut runs = Vec::with_capacity(jobs.len());
    let mut first_error = None;
    for r in execute_all(cfg, &datasets, &jobs, &out) {
        match r {
            Ok(r) => runs.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let aggregates = aggregate(&runs);
    write_summary(&out.join("summary.csv"), &runs, &aggregates)?;
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(ExperimentSummary {
        output: out,
        runs,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub val_dacc: MeanStd,
    pub test_dacc: MeanStd,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub experiment: ExperimentSummary,
    pub baseline_val: MeanStd,
    pub baseline_test_accuracy: MeanStd,
    pub points: Vec<SweepPoint>,
    /// Lambda with the highest mean validation delimited accuracy.
    pub best_lambda: f64,
}

impl SweepSummary {
    pub fn best(&self) -> &SweepPoint {
        self.points
            .iter()
            .find(|p| p.lambda == self.best_lambda)
            .expect("best lambda is a grid point")
    }
}

/// One simultaneous-learning run per lambda and seed plus a baseline run per
/// seed. Writes `summary.csv`, `sweep.csv` (one row per lambda, preceded by
/// the baseline row), `sweep_runs.csv` (one row per lambda and seed) and
/// `sweep.svg`.
pub fn lambda_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary> {
    if cfg.modes.lambdas.is_empty() {
        return Err(invalid("lambda sweep needs a non-empty lambda grid"));
    }
    let mut cfg = cfg.clone();
    cfg.modes.baseline = true;
    cfg.modes.dropout.clear();
    let experiment = run_experiment(&cfg)?;
    let base = experiment
        .aggregate(RunKind::Baseline)
        .expect("baseline runs are part of the sweep");
    let baseline_val = base
        .val_dacc
        .ok_or_else(|| invalid("baseline runs recorded no validation accuracy"))?;
    let baseline_test_accuracy = base.test_accuracy;
    let mut points = Vec::new();
    for &lambda in &cfg.modes.lambdas {
        let a = experiment
            .aggregate(RunKind::Simultaneous(lambda))
            .expect("every lambda ran");
        if points.iter().any(|p: &SweepPoint| p.lambda == lambda) {
            continue;
        }
        points.push(SweepPoint {
            lambda,
            val_dacc: a
                .val_dacc
                .ok_or_else(|| invalid("sweep runs recorded no validation accuracy"))?,
            test_dacc: a.test_dacc,
            runs: a.runs,
        });
    }
    let best_lambda = points
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if b.val_dacc.mean >= p.val_dacc.mean => Some(b),
            _ => Some(p),
        })
        .expect("non-empty grid")
        .lambda;

    let out = &experiment.output;
    let path = out.join("sweep_runs.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["lambda", "seed", "val_dacc", "test_dacc"])?;
    for r in &experiment.runs {
        let lambda = r.spec.kind.lambda().map_or("baseline".into(), |l| l.to_string());
        w.write_record([
            lambda,
            r.spec.seed.to_string(),
            fmt_opt(r.val_dacc),
            r.test.dacc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "lambda",
        "mean_val_dacc",
        "std_val_dacc",
        "mean_test_dacc",
        "std_test_dacc",
        "runs",
        "best",
    ])?;
    w.write_record([
        "baseline".to_string(),
        baseline_val.mean.to_string(),
        baseline_val.std.to_string(),
        baseline_test_accuracy.mean.to_string(),
        baseline_test_accuracy.std.to_string(),
        base.runs.to_string(),
        String::new(),
    ])?;
    for p in &points {
        w.write_record([
            p.lambda.to_string(),
            p.val_dacc.mean.to_string(),
            p.val_dacc.std.to_string(),
            p.test_dacc.mean.to_string(),
            p.test_dacc.std.to_string(),
            p.runs.to_string(),
            (p.lambda == best_lambda).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    emit_plot(
        &[Series {
            name: "simultaneous learning".into(),
            points: points.iter().map(|p| (p.lambda, p.val_dacc.mean)).collect(),
        }],
        &PlotStyle {
            title: "Validation delimited accuracy vs lambda".into(),
            x_label: "lambda".into(),
            y_label: "mean validation dacc".into(),
            baseline: Some(("baseline".into(), baseline_val.mean)),
        },
        &out.join("sweep.svg"),
    )?;
    log::info!("best lambda {best_lambda}");
    Ok(SweepSummary {
        experiment,
        baseline_val,
        baseline_test_accuracy,
        points,
        best_lambda,
    })
}

/// Indices of layers whose output keeps spatial structure.
pub fn spatial_layers(model: &Model) -> Result<Vec<usize>> {
    Ok(model
        .spec()
        .output_shapes()?
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() == 3)
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct InterpretSummary {
    /// `(layer, kind, base, sl)` rows as written to `layer_corr.csv`.
    pub layer_correlation: Vec<(usize, String, Option<f64>, Option<f64>)>,
    pub top_aux: Vec<RankedAuxClass>,
    pub heatmaps_written: usize,
    pub notices: Vec<String>,
}

/// Layer-correlation CSV for the supplied models and, for a model with an
/// auxiliary head, the ranking of auxiliary classes by target activation
/// with Grad-CAM overlays of their top instances.
pub fn interpret_export(
    base: Option<&Model>,
    sl: Option<&Model>,
    ds: &GroupedDataset,
    settings: &InterpretSection,
    out: &Path,
) -> Result<InterpretSummary> {
    let reference = base
        .or(sl)
        .ok_or_else(|| invalid("interpret_export needs at least one model"))?;
    create_dir(out)?;
    let mut summary = InterpretSummary::default();
    let layers = spatial_layers(reference)?;
    if layers.is_empty() {
        summary
            .notices
            .push("model has no spatial layers; layer correlation skipped".into());
    } else {
        let corr = |m: Option<&Model>| -> Result<Option<Vec<f64>>> {
            m.map(|m| {
                let report = layer_correlation(m, &ds.target_test, &layers)?;
                Ok(report.layers.iter().map(|l| l.mean_abs).collect())
            })
            .transpose()
        };
        let (b, s) = (corr(base)?, corr(sl)?);
        let path = out.join("layer_corr.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["layer", "kind", "base", "sl"])?;
        for (i, &layer) in layers.iter().enumerate() {
            let row = (
                layer,
                reference.spec().layers[layer].kind().to_string(),
                b.as_ref().map(|v| v[i]),
                s.as_ref().map(|v| v[i]),
            );
            w.write_record([
                row.0.to_string(),
                row.1.clone(),
                fmt_opt(row.2),
                fmt_opt(row.3),
            ])?;
            summary.layer_correlation.push(row);
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let Some(aux_model) = sl.filter(|m| m.layout().m > 0) else {
        let notice = "no model with an auxiliary head; auxiliary ranking and Grad-CAM exports skipped";
        log::warn!("{notice}");
        summary.notices.push(notice.into());
        return Ok(summary);
    };
    let ranked = top_activating_aux(
        aux_model,
        &ds.aux_pool,
        settings.top_classes,
        settings.top_instances,
    )?;
    let path = out.join("top_aux.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["rank", "class_index", "class_name", "score", "samples", "exhausted"])?;
    for (rank, r) in ranked.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            r.class_index.to_string(),
            ds.aux_names[r.class_index].clone(),
            r.score.to_string(),
            r.samples.to_string(),
            r.exhausted.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let cam_dir = out.join("gradcam");
    create_dir(&cam_dir)?;
    let targets: Vec<usize> = aux_model.layout().target_range().collect();
    let has_conv = aux_model.spec().last_conv_index().is_some();
    if !has_conv {
        summary
            .notices
            .push("model has no convolution layer; Grad-CAM skipped".into());
    }
    for r in ranked.iter().filter(|_| has_conv) {
        let stem = file_stem(&ds.aux_names[r.class_index]);
        for (i, inst) in r.instances.iter().enumerate() {
            let sample = &ds.aux_pool[inst.sample];
            let mut cam = grad_cam(aux_model, &sample.features, &targets)?;
            cam.source = Some(format!("{stem}#{}", inst.sample));
            let base_name = format!("{stem}_{}", i + 1);
            cam.save_png(&cam_dir.join(format!("{base_name}_heatmap.png")))?;
            cam.save_overlay(&sample.features, &cam_dir.join(format!("{base_name}_overlay.png")))?;
            tensor_to_image(&sample.features)?
                .save_with_format(cam_dir.join(format!("{base_name}.png")), image::ImageFormat::Png)
                .map_err(|e| Error::Image {
                    path: cam_dir.join(format!("{base_name}.png")),
                    message: e.to_string(),
                })?;
            summary.heatmaps_written += 1;
        }
    }
    summary.top_aux = ranked;
    Ok(summary)
}
