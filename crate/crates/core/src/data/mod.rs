//! Group-tagged datasets and the mixed batch composer.

pub(crate) mod image_dir;
mod synth;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::loss::{Group, GroupLayout, LabelVector};
use crate::tensor::Tensor;

pub use image_dir::{load_image_dir, write_image_dir, ImageDirConfig};
pub use synth::{synth_generate, SynthConfig};

/// One image (or feature vector) with its group and 0-based class index
/// within that group.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Tensor,
    pub group: Group,
    pub class_index: usize,
}

impl Sample {
    pub fn label(&self, layout: GroupLayout) -> Result<LabelVector> {
        encode_label(layout, self.group, self.class_index)
    }
}

/// Target splits plus the auxiliary pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub layout: GroupLayout,
    pub target_train: Vec<Sample>,
    pub target_val: Vec<Sample>,
    pub target_test: Vec<Sample>,
    pub aux_pool: Vec<Sample>,
    pub target_names: Vec<String>,
    pub aux_names: Vec<String>,
}

impl GroupedDataset {
    /// Per-sample input shape, taken from the first sample.
    pub fn input_shape(&self) -> Option<&[usize]> {
        self.target_train
            .first()
            .or(self.target_test.first())
            .map(|s| s.features.shape())
    }

    /// Keeps a seeded, per-class stratified `fraction` of the target
    /// training split (at least one sample per non-empty class).
    pub fn reduce_target_train<R: Rng + ?Sized>(&mut self, fraction: f64, rng: &mut R) -> Result<()> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(invalid(format!("reduction fraction {fraction} outside (0, 1]")));
        }
        if fraction == 1.0 {
            return Ok(());
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.target_train.iter().enumerate() {
            by_class.entry(s.class_index).or_default().push(i);
        }
        let mut keep = Vec::new();
        for ids in by_class.values_mut() {
            ids.shuffle(rng);
            let n = ((ids.len() as f64 * fraction).round() as usize).max(1);
            keep.extend_from_slice(&ids[..n]);
        }
        keep.sort_unstable();
        let old = std::mem::take(&mut self.target_train);
        self.target_train = keep.into_iter().map(|i| old[i].clone()).collect();
        Ok(())
    }

    /// Number of target training samples per class.
    pub fn train_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.layout.k];
        for s in &self.target_train {
            counts[s.class_index] += 1;
        }
        counts
    }
}

/// One-hot label over the `k + m` head.
pub fn encode_label(layout: GroupLayout, group: Group, class_index: usize) -> Result<LabelVector> {
    LabelVector::one_hot(layout, group, class_index)
}

pub fn decode_label(layout: GroupLayout, label: &LabelVector) -> (Group, usize) {
    label.decode(layout)
}

/// Where a batch row came from: its group and index within the source pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub group: Group,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<LabelVector>,
    pub provenance: Vec<Provenance>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, group: Group) -> usize {
        self.provenance.iter().filter(|p| p.group == group).count()
    }

    /// Assembles a batch from `(group, index)` references into two pools.
    pub fn gather(
        layout: GroupLayout,
        target_pool: &[Sample],
        aux_pool: &[Sample],
        provenance: Vec<Provenance>,
    ) -> Result<Batch> {
        let mut features = Vec::with_capacity(provenance.len());
        let mut labels = Vec::with_capacity(provenance.len());
        for p in &provenance {
            let pool = match p.group {
                Group::Target => target_pool,
                Group::Auxiliary => aux_pool,
            };
            let s = pool.get(p.index).ok_or_else(|| {
                invalid(format!("{} index {} out of range", p.group.as_str(), p.index))
            })?;
            features.push(&s.features);
            labels.push(s.label(layout)?);
        }
        Ok(Batch {
            inputs: Tensor::stack(&features)?,
            labels,
            provenance,
        })
    }
}

/// A target-only batch.
pub fn target_batch(layout: GroupLayout, target_pool: &[Sample], ids: &[usize]) -> Result<Batch> {
    let provenance = ids
        .iter()
        .map(|&index| Provenance {
            group: Group::Target,
            index,
        })
        .collect();
    Batch::gather(layout, target_pool, &[], provenance)
}

/// Builds one mixed step: the given target slice followed by `batch_size / 2`
/// auxiliary samples taken as a prefix of a fresh shuffle of the pool, so no
/// auxiliary sample repeats within the step.
pub fn compose_batch<R: Rng + ?Sized>(
    layout: GroupLayout,
    target_pool: &[Sample],
    target_ids: &[usize],
    aux_pool: &[Sample],
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    if batch_size < 2 || batch_size % 2 != 0 {
        return Err(invalid(format!("batch size {batch_size} must be even and >= 2")));
    }
    let half = batch_size / 2;
    if target_ids.len() != half {
        return Err(invalid(format!(
            "target slice has {} samples, expected {half}",
            target_ids.len()
        )));
    }
    if aux_pool.len() < half {
        return Err(invalid(format!(
            "auxiliary pool has {} samples, need {half}",
            aux_pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..aux_pool.len()).collect();
    order.shuffle(rng);
    let provenance = target_ids
        .iter()
        .map(|&index| Provenance {
            group: Group::Target,
            index,
        })
        .chain(order[..half].iter().map(|&index| Provenance {
            group: Group::Auxiliary,
            index,
        }))
        .collect();
    Batch::gather(layout, target_pool, aux_pool, provenance)
}

/// Target slices for one epoch: `floor(train_len / per_step)` consecutive
/// slices of a (optionally shuffled) index order; the remainder is dropped.
pub fn epoch_plan<R: Rng + ?Sized>(
    train_len: usize,
    per_step: usize,
    shuffle: bool,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if per_step == 0 {
        return Err(invalid("per-step target count must be at least 1"));
    }
    if train_len < per_step {
        return Err(invalid(format!(
            "target training set ({train_len}) smaller than the per-step slice ({per_step})"
        )));
    }
    let mut order: Vec<usize> = (0..train_len).collect();
    if shuffle {
        order.shuffle(rng);
    }
    let steps = train_len / per_step;
    Ok(order
        .chunks_exact(per_step)
        .take(steps)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Splits class-grouped indices into train/val/test by rounding the
/// validation and test fractions per class.
pub(crate) fn stratified_split<R: Rng + ?Sized>(
    per_class: &mut [Vec<usize>],
    val_fraction: f64,
    test_fraction: f64,
    rng: &mut R,
) -> Result<[Vec<usize>; 3]> {
    if !(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions val={val_fraction} test={test_fraction} leave no training data"
        )));
    }
    let mut out: [Vec<usize>; 3] = Default::default();
    for ids in per_class.iter_mut() {
        ids.shuffle(rng);
        let n = ids.len();
        let n_val = (n as f64 * val_fraction).round() as usize;
        let n_test = ((n as f64 * test_fraction).round() as usize).min(n - n_val);
        out[1].extend_from_slice(&ids[..n_val]);
        out[2].extend_from_slice(&ids[n_val..n_val + n_test]);
        out[0].extend_from_slice(&ids[n_val + n_test..]);
    }
    Ok(out)
}
