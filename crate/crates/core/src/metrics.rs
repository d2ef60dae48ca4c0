//! Evaluation metrics. Argmax ties are broken towards the lowest index.

use serde::Serialize;

use crate::data::Sample;
use crate::error::{invalid, shape, Result};
use crate::loss::{Group, GroupLayout, LabelVector};
use crate::nn::Model;
use crate::tensor::Tensor;

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_pairs<P>(predictions: &[P], labels: &[LabelVector]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(invalid("metric over an empty sample set"));
    }
    Ok(())
}

/// Delimited accuracy: argmax over the first `k` outputs only.
pub fn dacc<P: AsRef<[f64]>>(
    predictions: &[P],
    labels: &[LabelVector],
    layout: GroupLayout,
) -> Result<f64> {
    check_pairs(predictions, labels)?;
    let mut correct = 0usize;
    for (p, y) in predictions.iter().zip(labels) {
        let p = p.as_ref();
        if y.group() != Group::Target {
            return Err(invalid("delimited accuracy takes target-group samples only"));
        }
        if p.len() < layout.k {
            return Err(shape(format!(
                "prediction of length {} shorter than k = {}",
                p.len(),
                layout.k
            )));
        }
        if argmax(&p[..layout.k]) == y.hot_index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Plain accuracy: argmax over the full vector.
pub fn accuracy<P: AsRef<[f64]>>(predictions: &[P], labels: &[LabelVector]) -> Result<f64> {
    check_pairs(predictions, labels)?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| argmax(p.as_ref()) == y.hot_index())
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of samples whose full-vector argmax falls in the other group.
pub fn inter_group_error_rate<P: AsRef<[f64]>>(
    predictions: &[P],
    labels: &[LabelVector],
    layout: GroupLayout,
) -> Result<f64> {
    check_pairs(predictions, labels)?;
    let wrong = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| layout.group_of(argmax(p.as_ref())) != Some(y.group()))
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// `k x k` confusion counts (rows: true class, columns: delimited argmax).
pub fn confusion_matrix<P: AsRef<[f64]>>(
    predictions: &[P],
    labels: &[LabelVector],
    layout: GroupLayout,
) -> Result<Vec<Vec<usize>>> {
    check_pairs(predictions, labels)?;
    let mut m = vec![vec![0; layout.k]; layout.k];
    for (p, y) in predictions.iter().zip(labels) {
        if y.group() != Group::Target {
            return Err(invalid("confusion matrix takes target-group samples only"));
        }
        m[y.hot_index()][argmax(&p.as_ref()[..layout.k])] += 1;
    }
    Ok(m)
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Binary AUC from the Mann-Whitney rank sum. `None` when either class is
/// absent.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.len() != positive.len() {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// ROC points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct
/// score threshold.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let fpr = if n_neg > 0.0 { fp / n_neg } else { 0.0 };
        let tpr = if n_pos > 0.0 { tp / n_pos } else { 0.0 };
        points.push((fpr, tpr));
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocAuc {
    /// AUC per target class; `None` for classes without positives or negatives.
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean over the classes that could be evaluated.
    pub macro_auc: Option<f64>,
    pub skipped: Vec<usize>,
}

/// One-vs-rest AUC for each of the `k` target classes. `scores[i][c]` is the
/// score of sample `i` for class `c`; `classes[i]` its true class.
pub fn roc_auc_ovr<P: AsRef<[f64]>>(scores: &[P], classes: &[usize], k: usize) -> Result<RocAuc> {
    if scores.len() != classes.len() {
        return Err(shape("scores and classes differ in length"));
    }
    if let Some(s) = scores.iter().find(|s| s.as_ref().len() < k) {
        return Err(shape(format!(
            "score vector of length {} shorter than k = {k}",
            s.as_ref().len()
        )));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|s| s.as_ref()[c]).collect();
        let pos: Vec<bool> = classes.iter().map(|&y| y == c).collect();
        let auc = binary_auc(&col, &pos);
        if auc.is_none() {
            skipped.push(c);
        }
        per_class.push(auc);
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok(RocAuc {
        per_class,
        macro_auc,
        skipped,
    })
}

/// Inference-mode probabilities for every sample, evaluated in chunks.
pub fn predict_samples(model: &Model, samples: &[Sample], chunk: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&Tensor> = part.iter().map(|s| &s.features).collect();
        let probs = model.predict(&Tensor::stack(&refs)?)?;
        out.extend(probs.rows().map(<[f64]>::to_vec));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub samples: usize,
    pub accuracy: f64,
    pub dacc: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
    pub inter_group_error_rate: f64,
    pub confusion: Vec<Vec<usize>>,
    /// Target-group probabilities per sample, kept for ROC export.
    #[serde(skip)]
    pub target_scores: Vec<Vec<f64>>,
    #[serde(skip)]
    pub classes: Vec<usize>,
}

/// Evaluates a model on target-group samples. AUC scores are the target
/// outputs of the softmax.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<EvaluationReport> {
    let layout = model.layout();
    let probs = predict_samples(model, samples, 64)?;
    let labels = samples
        .iter()
        .map(|s| s.label(layout))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<usize> = samples.iter().map(|s| s.class_index).collect();
    let target_scores: Vec<Vec<f64>> = probs.iter().map(|p| p[..layout.k].to_vec()).collect();
    let auc = roc_auc_ovr(&target_scores, &classes, layout.k)?;
    Ok(EvaluationReport {
        samples: samples.len(),
        accuracy: accuracy(&probs, &labels)?,
        dacc: dacc(&probs, &labels, layout)?,
        per_class_auc: auc.per_class,
        macro_auc: auc.macro_auc,
        inter_group_error_rate: inter_group_error_rate(&probs, &labels, layout)?,
        confusion: confusion_matrix(&probs, &labels, layout)?,
        target_scores,
        classes,
    })
}
