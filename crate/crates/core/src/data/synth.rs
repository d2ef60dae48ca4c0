//! Procedural grouped image data.
//!
//! Target classes are single sinusoidal gratings, one orientation per class.
//! Auxiliary classes are plaids (the sum of two gratings) with a per-class
//! pair of orientations and a per-class spatial frequency. Every sample gets
//! a small phase jitter, a random contrast and additive Gaussian noise, so at
//! zero noise each class is a tight cluster around its own template.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GroupedDataset, Sample};
use crate::error::{invalid, Result};
use crate::loss::{Group, GroupLayout};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_train")]
    pub train_per_class: usize,
    /// Per-class training counts; overrides `train_per_class` when set.
    #[serde(default)]
    pub train_counts: Option<Vec<usize>>,
    #[serde(default = "default_holdout")]
    pub val_per_class: usize,
    #[serde(default = "default_holdout")]
    pub test_per_class: usize,
    #[serde(default = "default_aux")]
    pub aux_per_class: usize,
    /// Standard deviation of the additive pixel noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Half-width of the uniform phase jitter, in radians.
    #[serde(default = "default_jitter")]
    pub phase_jitter: f64,
    /// Grating frequency of the target group, in cycles per pixel.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    /// Gratings summed into each auxiliary class template.
    #[serde(default = "default_aux_components")]
    pub aux_components: usize,
}

fn default_side() -> usize {
    32
}
fn default_train() -> usize {
    40
}
fn default_holdout() -> usize {
    15
}
fn default_aux() -> usize {
    20
}
fn default_noise() -> f64 {
    0.5
}
fn default_jitter() -> f64 {
    0.5
}
fn default_frequency() -> f64 {
    0.12
}
fn default_aux_components() -> usize {
    2
}

impl SynthConfig {
    pub fn new(k: usize, m: usize) -> Self {
        SynthConfig {
            k,
            m,
            height: default_side(),
            width: default_side(),
            train_per_class: default_train(),
            train_counts: None,
            val_per_class: default_holdout(),
            test_per_class: default_holdout(),
            aux_per_class: default_aux(),
            noise: default_noise(),
            phase_jitter: default_jitter(),
            frequency: default_frequency(),
            aux_components: default_aux_components(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.m < 1 {
            return Err(invalid("synthetic data needs k >= 1 and m >= 1"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(invalid("synthetic image size must be positive"));
        }
        if let Some(counts) = &self.train_counts {
            if counts.len() != self.k || counts.iter().any(|&c| c == 0) {
                return Err(invalid(format!(
                    "train_counts must list {} positive counts",
                    self.k
                )));
            }
        } else if self.train_per_class == 0 {
            return Err(invalid("train_per_class must be at least 1"));
        }
        if self.aux_components == 0 {
            return Err(invalid("aux_components must be at least 1"));
        }
        if self.aux_per_class == 0 {
            return Err(invalid("aux_per_class must be at least 1"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("noise must be finite and non-negative"));
        }
        Ok(())
    }

    fn train_count(&self, class: usize) -> usize {
        self.train_counts
            .as_ref()
            .map_or(self.train_per_class, |c| c[class])
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    angle: f64,
    frequency: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct ClassTemplate {
    components: Vec<Component>,
}

impl ClassTemplate {
    fn render<R: Rng + ?Sized>(
        &self,
        cfg: &SynthConfig,
        noise: &Normal<f64>,
        rng: &mut R,
    ) -> Tensor {
        let contrast = rng.random_range(0.7..=1.0);
        let jitters: Vec<f64> = self
            .components
            .iter()
            .map(|_| {
                if cfg.phase_jitter > 0.0 {
                    rng.random_range(-cfg.phase_jitter..=cfg.phase_jitter)
                } else {
                    0.0
                }
            })
            .collect();
        let scale = 0.4 * contrast / self.components.len() as f64;
        let mut data = Vec::with_capacity(cfg.height * cfg.width);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let mut v = 0.0;
                for (c, j) in self.components.iter().zip(&jitters) {
                    let u = x as f64 * c.angle.cos() + y as f64 * c.angle.sin();
                    v += (2.0 * PI * c.frequency * u + c.phase + j).sin();
                }
                let n = if cfg.noise > 0.0 {
                    noise.sample(rng)
                } else {
                    0.0
                };
                data.push(0.5 + scale * v + n);
            }
        }
        Tensor::new(vec![cfg.height, cfg.width, 1], data).expect("consistent shape")
    }
}

/// Generates a grouped dataset; identical `(config, seed)` pairs give
/// bit-identical datasets.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<GroupedDataset> {
    cfg.validate()?;
    let layout = GroupLayout::new(cfg.k, cfg.m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| invalid(format!("noise distribution: {e}")))?;

    let target: Vec<ClassTemplate> = (0..cfg.k)
        .map(|c| ClassTemplate {
            components: vec![Component {
                angle: PI * c as f64 / cfg.k as f64,
                frequency: cfg.frequency,
                phase: rng.random_range(0.0..2.0 * PI),
            }],
        })
        .collect();
    let aux: Vec<ClassTemplate> = (0..cfg.m)
        .map(|_| {
            let frequency = rng.random_range(0.06..0.3);
            let mut angle = rng.random_range(0.0..PI);
            let components = (0..cfg.aux_components)
                .map(|_| {
                    let c = Component {
                        angle,
                        frequency,
                        phase: rng.random_range(0.0..2.0 * PI),
                    };
                    angle += rng.random_range(0.25 * PI..0.75 * PI);
                    c
                })
                .collect();
            ClassTemplate { components }
        })
        .collect();

    let make = |template: &ClassTemplate, group, class_index, count, rng: &mut ChaCha8Rng| {
        (0..count)
            .map(|_| Sample {
                features: template.render(cfg, &noise, rng),
                group,
                class_index,
            })
            .collect::<Vec<_>>()
    };

    let mut ds = GroupedDataset {
        layout,
        target_train: Vec::new(),
        target_val: Vec::new(),
        target_test: Vec::new(),
        aux_pool: Vec::new(),
        target_names: (0..cfg.k).map(|c| format!("t{c:02}")).collect(),
        aux_names: (0..cfg.m).map(|c| format!("a{c:02}")).collect(),
    };
    for (c, t) in target.iter().enumerate() {
        let train = make(t, Group::Target, c, cfg.train_count(c), &mut rng);
        let val = make(t, Group::Target, c, cfg.val_per_class, &mut rng);
        let test = make(t, Group::Target, c, cfg.test_per_class, &mut rng);
        ds.target_train.extend(train);
        ds.target_val.extend(val);
        ds.target_test.extend(test);
    }
    for (c, t) in aux.iter().enumerate() {
        let samples = make(t, Group::Auxiliary, c, cfg.aux_per_class, &mut rng);
        ds.aux_pool.extend(samples);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nearest-centroid classifier fitted on the training split.
    fn centroid_accuracy(ds: &GroupedDataset) -> f64 {
        let k = ds.layout.k;
        let dim = ds.target_train[0].features.len();
        let mut centroids = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for s in &ds.target_train {
            counts[s.class_index] += 1;
            for (c, v) in centroids[s.class_index].iter_mut().zip(s.features.data()) {
                *c += v;
            }
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= *n as f64);
        }
        let correct = ds
            .target_test
            .iter()
            .filter(|s| {
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let d = |c: &Vec<f64>| {
                            c.iter()
                                .zip(s.features.data())
                                .map(|(x, y)| (x - y).powi(2))
                                .sum::<f64>()
                        };
                        d(&centroids[a]).total_cmp(&d(&centroids[b]))
                    })
                    .unwrap();
                best == s.class_index
            })
            .count();
        correct as f64 / ds.target_test.len() as f64
    }

    #[test]
    fn noiseless_data_is_centroid_separable() {
        let mut cfg = SynthConfig::new(6, 4);
        cfg.noise = 0.0;
        let ds = synth_generate(&cfg, 3).unwrap();
        assert_eq!(centroid_accuracy(&ds), 1.0);
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig::new(3, 2);
        let a = synth_generate(&cfg, 11).unwrap();
        let b = synth_generate(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn imbalance_vector_respected() {
        let mut cfg = SynthConfig::new(3, 2);
        cfg.train_counts = Some(vec![5, 9, 2]);
        cfg.aux_per_class = 4;
        let ds = synth_generate(&cfg, 0).unwrap();
        assert_eq!(ds.train_class_counts(), vec![5, 9, 2]);
        assert_eq!(ds.target_test.len(), 3 * cfg.test_per_class);
        assert_eq!(ds.aux_pool.len(), 8);
        cfg.train_counts = Some(vec![1, 2]);
        assert!(synth_generate(&cfg, 0).is_err());
    }
}
