//! Looking inside a trained network: how similar the per-class channel
//! responses of a layer are, where in an image the target outputs look
//! (Grad-CAM), and which auxiliary classes pull hardest on the target group.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};
use serde::Serialize;

use crate::data::image_dir::{save_png, tensor_to_image};
use crate::data::Sample;
use crate::error::{invalid, Error, Result};
use crate::metrics::predict_samples;
use crate::nn::Model;
use crate::tensor::Tensor;

const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassChannelVector {
    pub class_index: usize,
    pub layer: usize,
    pub values: Vec<f64>,
}

/// Per-channel sums of the positive entries of an `[B, H, W, C]` tensor.
pub fn positive_channel_sums(activations: &Tensor) -> Result<Vec<f64>> {
    let &[_, _, _, c] = activations.shape() else {
        return Err(invalid(format!(
            "channel sums need a [B, H, W, C] activation, got {:?}",
            activations.shape()
        )));
    };
    let mut sums = vec![0.0; c];
    for px in activations.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(px) {
            if v > 0.0 {
                *s += v;
            }
        }
    }
    Ok(sums)
}

fn check_spatial_layer(model: &Model, layer: usize) -> Result<()> {
    let shapes = model.spec().output_shapes()?;
    match shapes.get(layer) {
        Some(s) if s.len() == 3 => Ok(()),
        Some(s) => Err(invalid(format!(
            "layer {layer} ({}) has non-spatial output {s:?}",
            model.spec().layers[layer].kind()
        ))),
        None => Err(invalid(format!(
            "layer {layer} out of range for a {}-layer model",
            shapes.len()
        ))),
    }
}

/// Channel sums for several layers over one set of samples, one forward
/// pass per chunk.
fn channel_sums(model: &Model, samples: &[Sample], layers: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut totals: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&Tensor> = chunk.iter().map(|s| &s.features).collect();
        let pass = model.forward(&Tensor::stack(&refs)?, None)?;
        for (slot, &layer) in layers.iter().enumerate() {
            let out = pass.layer_output(layer).expect("checked layer index");
            let sums = positive_channel_sums(out)?;
            match totals.get_mut(slot) {
                Some(t) => t.iter_mut().zip(&sums).for_each(|(a, b)| *a += b),
                None => totals.push(sums),
            }
        }
    }
    Ok(totals)
}

/// Sums the positive outputs of each channel of `layer` over all spatial
/// positions and all `samples`, which must share one class.
pub fn class_channel_vector(
    model: &Model,
    samples: &[Sample],
    layer: usize,
) -> Result<ClassChannelVector> {
    let first = samples
        .first()
        .ok_or_else(|| invalid("class_channel_vector needs at least one sample"))?;
    if samples
        .iter()
        .any(|s| s.class_index != first.class_index || s.group != first.group)
    {
        return Err(invalid("samples span more than one class"));
    }
    check_spatial_layer(model, layer)?;
    let values = channel_sums(model, samples, &[layer])?.remove(0);
    Ok(ClassChannelVector {
        class_index: first.class_index,
        layer,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pearson {
    pub r: f64,
    /// Set when either input has zero variance; `r` is then 0.
    pub degenerate: bool,
}

pub fn pearson(u: &[f64], v: &[f64]) -> Result<Pearson> {
    if u.len() != v.len() {
        return Err(invalid(format!(
            "pearson: lengths {} and {} differ",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 2 {
        return Err(invalid("pearson needs at least two points"));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu == 0.0 || svv == 0.0 {
        return Ok(Pearson {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(Pearson {
        r: (suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseCorrelation {
    /// Mean of `|r|` over all unordered pairs.
    pub mean_abs: f64,
    /// Symmetric coefficient matrix with a unit diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// Positions (into the input list) of zero-variance vectors.
    pub degenerate: Vec<usize>,
}

pub fn pairwise_correlation(vectors: &[Vec<f64>]) -> Result<PairwiseCorrelation> {
    let n = vectors.len();
    if n < 2 {
        return Err(invalid("pairwise correlation needs at least two vectors"));
    }
    let mut matrix = vec![vec![0.0; n]; n];
    let mut degenerate = Vec::new();
    let mut total = 0.0;
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in i + 1..n {
            let p = pearson(&vectors[i], &vectors[j])?;
            matrix[i][j] = p.r;
            matrix[j][i] = p.r;
            total += p.r.abs();
        }
        if vectors[i].iter().all(|&x| x == vectors[i][0]) {
            degenerate.push(i);
        }
    }
    Ok(PairwiseCorrelation {
        mean_abs: total / (n * (n - 1) / 2) as f64,
        matrix,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCorrelation {
    pub layer: usize,
    pub kind: &'static str,
    pub mean_abs: f64,
    /// Class indices in the order used by `matrix`.
    pub classes: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    /// Classes whose channel vector has zero variance.
    pub degenerate_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCorrelationReport {
    pub layers: Vec<LayerCorrelation>,
    /// Target classes with no samples, left out of every layer.
    pub skipped_classes: Vec<usize>,
}

impl LayerCorrelationReport {
    pub fn mean_abs(&self, layer: usize) -> Option<f64> {
        self.layers.iter().find(|l| l.layer == layer).map(|l| l.mean_abs)
    }
}

/// Layer Correlation of each requested layer over the target samples in
/// `samples`; other groups are ignored.
pub fn layer_correlation(
    model: &Model,
    samples: &[Sample],
    layers: &[usize],
) -> Result<LayerCorrelationReport> {
    if layers.is_empty() {
        return Err(invalid("no layers requested"));
    }
    for &l in layers {
        check_spatial_layer(model, l)?;
    }
    let k = model.layout().k;
    let mut by_class: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.group == crate::Group::Target) {
        if s.class_index >= k {
            return Err(invalid(format!("target class {} >= k = {k}", s.class_index)));
        }
        by_class.entry(s.class_index).or_default().push(s.clone());
    }
    let skipped_classes: Vec<usize> = (0..k).filter(|c| !by_class.contains_key(c)).collect();
    if by_class.len() < 2 {
        return Err(invalid(format!(
            "layer correlation needs two populated classes, found {}",
            by_class.len()
        )));
    }
    if !skipped_classes.is_empty() {
        log::warn!("layer correlation skips empty classes {skipped_classes:?}");
    }
    let classes: Vec<usize> = by_class.keys().copied().collect();
    // per_class[c][slot] = vector of class c at layers[slot]
    let per_class = by_class
        .values()
        .map(|s| channel_sums(model, s, layers))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(layers.len());
    for (slot, &layer) in layers.iter().enumerate() {
        let vectors: Vec<Vec<f64>> = per_class.iter().map(|v| v[slot].clone()).collect();
        let pc = pairwise_correlation(&vectors)?;
        out.push(LayerCorrelation {
            layer,
            kind: model.spec().layers[layer].kind(),
            mean_abs: pc.mean_abs,
            classes: classes.clone(),
            matrix: pc.matrix,
            degenerate_classes: pc.degenerate.iter().map(|&i| classes[i]).collect(),
        });
    }
    Ok(LayerCorrelationReport {
        layers: out,
        skipped_classes,
    })
}

/// `[H, W]` map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub values: Tensor,
    pub source: Option<String>,
    /// Sum of the selected logits for the source image.
    pub score: f64,
}

impl Heatmap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn to_gray(&self) -> GrayImage {
        let px = self
            .values
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        GrayImage::from_raw(self.width() as u32, self.height() as u32, px)
            .expect("heatmap buffer matches its shape")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_png(&DynamicImage::ImageLuma8(self.to_gray()), path)
    }

    /// Binary greyscale PGM (`P5`).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        bytes.extend_from_slice(self.to_gray().as_raw());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    /// Blends the heatmap in red over `image` (`[H, W, C]`, values in `[0, 1]`).
    pub fn overlay(&self, image: &Tensor) -> Result<RgbImage> {
        let &[h, w, _] = image.shape() else {
            return Err(invalid(format!("expected [H, W, C] image, got {:?}", image.shape())));
        };
        if (h, w) != (self.height(), self.width()) {
            return Err(invalid(format!(
                "heatmap is {}x{}, image is {h}x{w}",
                self.height(),
                self.width()
            )));
        }
        let base = tensor_to_image(image)?.to_rgb8();
        let mut out = RgbImage::new(w as u32, h as u32);
        for (x, y, px) in out.enumerate_pixels_mut() {
            let a = 0.6 * self.values.data()[y as usize * w + x as usize];
            let src = base.get_pixel(x, y).0;
            let tint = [255.0, 0.0, 0.0];
            for ch in 0..3 {
                px.0[ch] = ((1.0 - a) * src[ch] as f64 + a * tint[ch]).round() as u8;
            }
        }
        Ok(out)
    }

    pub fn save_overlay(&self, image: &Tensor, path: &Path) -> Result<()> {
        save_png(&DynamicImage::ImageRgb8(self.overlay(image)?), path)
    }
}

/// Grad-CAM on the last convolution layer for the sum of the selected head
/// logits.
pub fn grad_cam(model: &Model, image: &Tensor, outputs: &[usize]) -> Result<Heatmap> {
    let conv = model
        .spec()
        .last_conv_index()
        .ok_or_else(|| Error::InvalidState("model has no convolution layer".into()))?;
    let n = model.spec().head_outputs();
    if outputs.is_empty() {
        return Err(invalid("grad_cam needs at least one output index"));
    }
    if let Some(&bad) = outputs.iter().find(|&&o| o >= n) {
        return Err(invalid(format!("output {bad} out of range for {n} outputs")));
    }
    let &[ih, iw, _] = image.shape() else {
        return Err(invalid(format!("expected [H, W, C] image, got {:?}", image.shape())));
    };
    let batch = Tensor::stack(&[image])?;
    let pass = model.forward(&batch, None)?;
    let logits = pass.logits().row(0);
    let score = outputs.iter().map(|&o| logits[o]).sum();
    let mut seed = Tensor::zeros(&[1, n]);
    for &o in outputs {
        seed.data_mut()[o] += 1.0;
    }
    let grads = model.backward(&pass, &seed)?;
    let act = pass.layer_output(conv).expect("conv layer output");
    let grad = &grads.activations[conv + 1];
    let &[_, h, w, c] = act.shape() else {
        unreachable!("conv output is 4-d");
    };
    let mut weights = vec![0.0; c];
    for px in grad.data().chunks_exact(c) {
        weights.iter_mut().zip(px).for_each(|(a, g)| *a += g);
    }
    weights.iter_mut().for_each(|a| *a /= (h * w) as f64);
    let cam: Vec<f64> = act
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>().max(0.0))
        .collect();
    let peak = cam.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut up = Vec::with_capacity(ih * iw);
    for y in 0..ih {
        let sy = (y * h / ih).min(h - 1);
        for x in 0..iw {
            let sx = (x * w / iw).min(w - 1);
            up.push(cam[sy * w + sx] * scale);
        }
    }
    Ok(Heatmap {
        values: Tensor::new(vec![ih, iw], up)?,
        source: None,
        score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedInstance {
    /// Position in the sample list passed to the ranking.
    pub sample: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedAuxClass {
    pub class_index: usize,
    /// Mean summed target-group probability over the class samples.
    pub score: f64,
    pub samples: usize,
    pub instances: Vec<RankedInstance>,
    /// The class had no more than `top_instances` samples, so all are listed.
    pub exhausted: bool,
}

/// Ranks auxiliary classes by per-sample scores. Ties keep the lower index
/// first.
pub fn rank_aux_classes(
    scores: &[f64],
    classes: &[usize],
    top_classes: usize,
    top_instances: usize,
) -> Result<Vec<RankedAuxClass>> {
    if scores.len() != classes.len() {
        return Err(invalid(format!(
            "{} scores for {} class labels",
            scores.len(),
            classes.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let by_score = |a: f64, b: f64| b.total_cmp(&a);
    let mut ranked: Vec<RankedAuxClass> = by_class
        .into_iter()
        .map(|(class_index, ids)| {
            let mean = ids.iter().map(|&i| scores[i]).sum::<f64>() / ids.len() as f64;
            let mut instances: Vec<RankedInstance> = ids
                .iter()
                .map(|&i| RankedInstance {
                    sample: i,
                    score: scores[i],
                })
                .collect();
            instances.sort_by(|a, b| by_score(a.score, b.score).then(a.sample.cmp(&b.sample)));
            let exhausted = top_instances >= instances.len();
            instances.truncate(top_instances);
            RankedAuxClass {
                class_index,
                score: mean,
                samples: ids.len(),
                instances,
                exhausted,
            }
        })
        .collect();
    ranked.sort_by(|a, b| by_score(a.score, b.score).then(a.class_index.cmp(&b.class_index)));
    ranked.truncate(top_classes);
    Ok(ranked)
}

/// Auxiliary classes whose samples put the most softmax mass on the target
/// group.
pub fn top_activating_aux(
    model: &Model,
    aux_samples: &[Sample],
    top_classes: usize,
    top_instances: usize,
) -> Result<Vec<RankedAuxClass>> {
    let layout = model.layout();
    if layout.m == 0 {
        return Err(Error::InvalidState("model has no auxiliary outputs".into()));
    }
    for s in aux_samples {
        if s.group != crate::Group::Auxiliary || s.class_index >= layout.m {
            return Err(invalid(format!(
                "expected auxiliary samples with class < {}, got {} class {}",
                layout.m,
                s.group.as_str(),
                s.class_index
            )));
        }
    }
    let probs = predict_samples(model, aux_samples, CHUNK)?;
    let scores: Vec<f64> = probs.iter().map(|p| p[layout.target_range()].iter().sum()).collect();
    let classes: Vec<usize> = aux_samples.iter().map(|s| s.class_index).collect();
    rank_aux_classes(&scores, &classes, top_classes, top_instances)
}
