//! `<root>/<group>/<class>/<image files>` datasets, with `group` one of
//! `target` or `auxiliary`. Classes are ordered by directory name. Only PNG
//! files are read; anything else is skipped with a warning.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{stratified_split, GroupedDataset, Sample};
use crate::error::{invalid, Error, Result};
use crate::loss::{Group, GroupLayout};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageDirConfig {
    pub root: PathBuf,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    /// 1 for grayscale, 3 for RGB.
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    /// Fail when the `auxiliary` directory is missing or empty.
    #[serde(default = "default_true")]
    pub require_auxiliary: bool,
}

fn default_side() -> usize {
    32
}
fn default_channels() -> usize {
    1
}
fn default_fraction() -> f64 {
    0.15
}
fn default_true() -> bool {
    true
}

impl ImageDirConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageDirConfig {
            root: root.into(),
            height: default_side(),
            width: default_side(),
            channels: default_channels(),
            val_fraction: default_fraction(),
            test_fraction: default_fraction(),
            require_auxiliary: true,
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn decode(path: &Path, cfg: &ImageDirConfig) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })?;
    let img = img.resize_exact(cfg.width as u32, cfg.height as u32, FilterType::Triangle);
    let data: Vec<f64> = match cfg.channels {
        1 => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        3 => img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        c => return Err(invalid(format!("unsupported channel count {c}"))),
    };
    Tensor::new(vec![cfg.height, cfg.width, cfg.channels], data)
}

/// Reads every class directory of one group; returns class names and
/// `(class_index, image)` pairs.
fn load_group(dir: &Path, cfg: &ImageDirConfig) -> Result<(Vec<String>, Vec<(usize, Tensor)>)> {
    let mut names = Vec::new();
    let mut items = Vec::new();
    for class_dir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let class_index = names.len();
        let mut found = 0;
        for file in sorted_entries(&class_dir)? {
            if !file.is_file() {
                continue;
            }
            if !is_png(&file) {
                log::warn!("skipping non-PNG file {}", file.display());
                continue;
            }
            items.push((class_index, decode(&file, cfg)?));
            found += 1;
        }
        if found == 0 {
            return Err(Error::InvalidDataset(format!(
                "class directory {} contains no PNG images",
                class_dir.display()
            )));
        }
        names.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok((names, items))
}

/// Loads a grouped dataset and splits the target group per class into
/// train/validation/test with a seeded shuffle.
pub fn load_image_dir(cfg: &ImageDirConfig, seed: u64) -> Result<GroupedDataset> {
    if cfg.height == 0 || cfg.width == 0 {
        return Err(invalid("image size must be positive"));
    }
    let target_dir = cfg.root.join(Group::Target.as_str());
    if !target_dir.is_dir() {
        return Err(Error::InvalidDataset(format!(
            "missing target directory {}",
            target_dir.display()
        )));
    }
    let (target_names, target_items) = load_group(&target_dir, cfg)?;
    if target_names.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no class directories under {}",
            target_dir.display()
        )));
    }
    let aux_dir = cfg.root.join(Group::Auxiliary.as_str());
    let (aux_names, aux_items) = if aux_dir.is_dir() {
        load_group(&aux_dir, cfg)?
    } else {
        (Vec::new(), Vec::new())
    };
    if cfg.require_auxiliary && aux_items.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "auxiliary group required but {} is missing or empty",
            aux_dir.display()
        )));
    }
    let layout = GroupLayout::new(target_names.len(), aux_names.len())?;

    let mut per_class = vec![Vec::new(); target_names.len()];
    for (i, (c, _)) in target_items.iter().enumerate() {
        per_class[*c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [mut train, mut val, mut test] =
        stratified_split(&mut per_class, cfg.val_fraction, cfg.test_fraction, &mut rng)?;
    for ids in [&mut train, &mut val, &mut test] {
        ids.sort_unstable();
    }
    let take = |ids: &[usize]| -> Vec<Sample> {
        ids.iter()
            .map(|&i| Sample {
                features: target_items[i].1.clone(),
                group: Group::Target,
                class_index: target_items[i].0,
            })
            .collect()
    };
    Ok(GroupedDataset {
        layout,
        target_train: take(&train),
        target_val: take(&val),
        target_test: take(&test),
        aux_pool: aux_items
            .into_iter()
            .map(|(class_index, features)| Sample {
                features,
                group: Group::Auxiliary,
                class_index,
            })
            .collect(),
        target_names,
        aux_names,
    })
}

/// Encodes an `[H, W, C]` tensor (values clamped to `[0, 1]`) as an image.
pub(crate) fn tensor_to_image(t: &Tensor) -> Result<DynamicImage> {
    let [h, w, c] = *t.shape() else {
        return Err(invalid(format!("expected [H, W, C] image, got {:?}", t.shape())));
    };
    let px: Vec<u8> = t
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (w as u32, h as u32);
    Ok(match c {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, px).ok_or_else(|| invalid("image buffer size"))?,
        ),
        3 => DynamicImage::ImageRgb8(
            RgbImage::from_raw(w, h, px).ok_or_else(|| invalid("image buffer size"))?,
        ),
        c => return Err(invalid(format!("unsupported channel count {c}"))),
    })
}

pub(crate) fn save_png(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Writes every sample of `ds` as PNG in the directory layout read by
/// [`load_image_dir`]. Target splits are merged; the loader re-splits them.
pub fn write_image_dir(ds: &GroupedDataset, root: &Path) -> Result<usize> {
    let mut written = 0;
    let target = ds
        .target_train
        .iter()
        .chain(&ds.target_val)
        .chain(&ds.target_test);
    for (i, s) in target.chain(&ds.aux_pool).enumerate() {
        let names = match s.group {
            Group::Target => &ds.target_names,
            Group::Auxiliary => &ds.aux_names,
        };
        let class = names
            .get(s.class_index)
            .cloned()
            .unwrap_or_else(|| format!("c{:02}", s.class_index));
        let dir = root.join(s.group.as_str()).join(class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_png(&tensor_to_image(&s.features)?, &dir.join(format!("{i:05}.png")))?;
        written += 1;
    }
    Ok(written)
}
