//! Grouped classification losses over a single softmax spanning a target
//! group (`k` classes) followed by an auxiliary group (`m` classes).
//!
//! * [`cce`]: categorical cross-entropy over the whole vector.
//! * [`weighted_group_loss`]: weighted sum of per-group cross-entropies for
//!   an arbitrary partition of the outputs.
//! * [`wgcc`]: the two-group case with weights `[lambda, 1 - lambda]`.
//! * [`group_penalty`]: penalises probability mass that lands in the group
//!   the label does not belong to.
//! * [`sll`]: `wgcc + group_penalty`, the training objective, with its
//!   gradient with respect to the logits in [`sll_grad_logits`].
//!
//! Probabilities are clamped below at [`LOG_EPS`] before taking logs; the
//! gradients treat the clamp consistently (zero slope below it). Batch losses
//! are arithmetic means of per-sample losses.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::nn::layers::softmax_row;

/// Lower clamp applied to probabilities before `ln`.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Target,
    Auxiliary,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::Target => Group::Auxiliary,
            Group::Auxiliary => Group::Target,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Target => "target",
            Group::Auxiliary => "auxiliary",
        }
    }
}

/// Partition of the `n = k + m` outputs: target classes occupy `0..k`,
/// auxiliary classes `k..k + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub k: usize,
    pub m: usize,
}

impl GroupLayout {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if k < 1 {
            return Err(invalid("layout needs at least one target class"));
        }
        Ok(GroupLayout { k, m })
    }

    pub fn n(&self) -> usize {
        self.k + self.m
    }

    pub fn target_range(&self) -> Range<usize> {
        0..self.k
    }

    pub fn aux_range(&self) -> Range<usize> {
        self.k..self.k + self.m
    }

    pub fn range(&self, group: Group) -> Range<usize> {
        match group {
            Group::Target => self.target_range(),
            Group::Auxiliary => self.aux_range(),
        }
    }

    pub fn group_of(&self, index: usize) -> Option<Group> {
        if index < self.k {
            Some(Group::Target)
        } else if index < self.n() {
            Some(Group::Auxiliary)
        } else {
            None
        }
    }

    pub fn class_count(&self, group: Group) -> usize {
        match group {
            Group::Target => self.k,
            Group::Auxiliary => self.m,
        }
    }
}

/// The hyperparameter vector `[lambda, alpha, beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Hyperparameters {
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        let h = Hyperparameters {
            lambda,
            alpha,
            beta,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        check_penalty(self.alpha, self.beta)
    }

    /// Group weights `[lambda, 1 - lambda]`.
    pub fn group_weights(&self) -> [f64; 2] {
        [self.lambda, 1.0 - self.lambda]
    }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

fn check_penalty(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
        return Err(invalid(format!(
            "penalty weights must be finite and non-negative, got alpha={alpha} beta={beta}"
        )));
    }
    Ok(())
}

/// A one-hot label over the full `k + m` output vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
    group: Group,
    hot: usize,
}

impl LabelVector {
    /// One-hot label for `class_index` (0-based within its group).
    pub fn one_hot(layout: GroupLayout, group: Group, class_index: usize) -> Result<Self> {
        let count = layout.class_count(group);
        if class_index >= count {
            return Err(invalid(format!(
                "{} class index {class_index} out of range (group has {count} classes)",
                group.as_str()
            )));
        }
        let hot = layout.range(group).start + class_index;
        let mut values = vec![0.0; layout.n()];
        values[hot] = 1.0;
        Ok(LabelVector { values, group, hot })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn group(&self) -> Group {
        self.group
    }

    /// Position of the hot entry in the full output vector.
    pub fn hot_index(&self) -> usize {
        self.hot
    }

    /// Recovers `(group, class_index)`.
    pub fn decode(&self, layout: GroupLayout) -> (Group, usize) {
        (self.group, self.hot - layout.range(self.group).start)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_len(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(shape(format!(
            "label has {} entries, prediction has {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

fn check_layout(layout: GroupLayout, len: usize) -> Result<()> {
    if layout.n() != len {
        return Err(shape(format!(
            "layout k={} m={} does not match vector length {len}",
            layout.k, layout.m
        )));
    }
    Ok(())
}

fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_EPS).ln()
}

/// Cross-entropy restricted to `range`; only non-zero labels contribute.
fn ce_over(y: &[f64], yhat: &[f64], range: Range<usize>) -> f64 {
    -y[range.clone()]
        .iter()
        .zip(&yhat[range])
        .filter(|(yi, _)| **yi != 0.0)
        .map(|(yi, pi)| yi * clamped_ln(*pi))
        .sum::<f64>()
}

/// Categorical cross-entropy `-sum_i y_i ln(yhat_i)`.
pub fn cce(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_len(y, yhat)?;
    Ok(ce_over(y, yhat, 0..y.len()))
}

/// `sum_i weights[i] * CE restricted to groups[i]`. The groups must
/// partition `0..n` exactly.
pub fn weighted_group_loss(
    y: &[f64],
    yhat: &[f64],
    groups: &[Range<usize>],
    weights: &[f64],
) -> Result<f64> {
    check_len(y, yhat)?;
    if groups.len() != weights.len() {
        return Err(invalid(format!(
            "{} groups but {} weights",
            groups.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("group weights must be finite and non-negative"));
    }
    let mut covered = vec![false; y.len()];
    for g in groups {
        if g.end > y.len() {
            return Err(invalid(format!("group {g:?} exceeds length {}", y.len())));
        }
        for c in &mut covered[g.clone()] {
            if *c {
                return Err(invalid("groups overlap"));
            }
            *c = true;
        }
    }
    if covered.iter().any(|c| !c) {
        return Err(invalid("groups do not cover every output"));
    }
    Ok(groups
        .iter()
        .zip(weights)
        .map(|(g, w)| w * ce_over(y, yhat, g.clone()))
        .sum())
}

/// Weighted group categorical cross-entropy.
pub fn wgcc(y: &[f64], yhat: &[f64], layout: GroupLayout, lambda: f64) -> Result<f64> {
    check_len(y, yhat)?;
    check_layout(layout, y.len())?;
    check_lambda(lambda)?;
    Ok(lambda * ce_over(y, yhat, layout.target_range())
        + (1.0 - lambda) * ce_over(y, yhat, layout.aux_range()))
}

fn group_sum(v: &[f64], range: Range<usize>) -> f64 {
    v[range].iter().sum()
}

/// Inter-group penalty
/// `alpha * sum_t y_t * sum_a yhat_a + beta * sum_t yhat_t * sum_a y_a`.
pub fn group_penalty(
    y: &[f64],
    yhat: &[f64],
    layout: GroupLayout,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    check_len(y, yhat)?;
    check_layout(layout, y.len())?;
    check_penalty(alpha, beta)?;
    let (t, a) = (layout.target_range(), layout.aux_range());
    Ok(alpha * group_sum(y, t.clone()) * group_sum(yhat, a.clone())
        + beta * group_sum(yhat, t) * group_sum(y, a))
}

/// Simultaneous-learning loss: `wgcc + group_penalty`.
pub fn sll(y: &[f64], yhat: &[f64], layout: GroupLayout, h: &Hyperparameters) -> Result<f64> {
    Ok(wgcc(y, yhat, layout, h.lambda)? + group_penalty(y, yhat, layout, h.alpha, h.beta)?)
}

/// Gradient of `sll(y, softmax(logits), h)` with respect to `logits`.
///
/// With `p = softmax(z)` and `g = dL/dp`, `dL/dz_j = p_j (g_j - sum_i p_i g_i)`.
/// The cross-entropy part collapses to `w_i y_i (p_j - [j == i])` for each
/// labelled index `i` whose probability is above the clamp.
pub fn sll_grad_logits(
    y: &[f64],
    logits: &[f64],
    layout: GroupLayout,
    h: &Hyperparameters,
) -> Result<Vec<f64>> {
    check_len(y, logits)?;
    check_layout(layout, y.len())?;
    h.validate()?;
    let p = softmax_row(logits);
    Ok(sll_grad_from_probs(y, &p, layout, h))
}

/// Same as [`sll_grad_logits`] given the already computed softmax output.
pub(crate) fn sll_grad_from_probs(
    y: &[f64],
    p: &[f64],
    layout: GroupLayout,
    h: &Hyperparameters,
) -> Vec<f64> {
    let n = y.len();
    let mut grad = vec![0.0; n];
    let [w_target, w_aux] = h.group_weights();
    for (i, &yi) in y.iter().enumerate() {
        if yi == 0.0 || p[i] <= LOG_EPS {
            continue;
        }
        let w = if i < layout.k { w_target } else { w_aux };
        if w == 0.0 {
            continue;
        }
        for (j, gj) in grad.iter_mut().enumerate() {
            *gj += w * yi * (p[j] - if j == i { 1.0 } else { 0.0 });
        }
    }
    // Penalty: dGP/dp is constant within each group.
    let target_label = group_sum(y, layout.target_range());
    let aux_label = group_sum(y, layout.aux_range());
    let c_target = h.beta * aux_label;
    let c_aux = h.alpha * target_label;
    if c_target != 0.0 || c_aux != 0.0 {
        let mean_c = c_target * group_sum(p, layout.target_range())
            + c_aux * group_sum(p, layout.aux_range());
        for (j, gj) in grad.iter_mut().enumerate() {
            let c = if j < layout.k { c_target } else { c_aux };
            *gj += p[j] * (c - mean_c);
        }
    }
    grad
}

/// Mean SLL over a batch of label and probability rows.
pub fn sll_batch(
    labels: &[LabelVector],
    probs: &[&[f64]],
    layout: GroupLayout,
    h: &Hyperparameters,
) -> Result<f64> {
    if labels.len() != probs.len() || labels.is_empty() {
        return Err(shape(format!(
            "{} labels vs {} prediction rows",
            labels.len(),
            probs.len()
        )));
    }
    let mut total = 0.0;
    for (y, p) in labels.iter().zip(probs) {
        total += sll(y.values(), p, layout, h)?;
    }
    Ok(total / labels.len() as f64)
}

/// Mean CCE over a batch.
pub fn cce_batch(labels: &[LabelVector], probs: &[&[f64]]) -> Result<f64> {
    if labels.len() != probs.len() || labels.is_empty() {
        return Err(shape(format!(
            "{} labels vs {} prediction rows",
            labels.len(),
            probs.len()
        )));
    }
    let mut total = 0.0;
    for (y, p) in labels.iter().zip(probs) {
        total += cce(y.values(), p)?;
    }
    Ok(total / labels.len() as f64)
}
