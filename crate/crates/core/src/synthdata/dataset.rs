//! Paired view records and their on-disk layout.

use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::render::{render_ego, render_exo, ExoMode};
use super::scene::{sample_scene, NUM_CLASSES, NUM_SEG_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Test scene seeds start this far above the base seed.
pub const TEST_SEED_OFFSET: u64 = 1 << 40;
pub const DEFAULT_TRAIN_SIZE: usize = 512;
pub const DEFAULT_TEST_SIZE: usize = 128;
pub const DEFAULT_RESOLUTION: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Side2Ego,
    Top2Ego,
}

impl Mode {
    pub fn exo_mode(self) -> ExoMode {
        match self {
            Mode::Side2Ego => ExoMode::Side,
            Mode::Top2Ego => ExoMode::Top,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "side2ego" => Ok(Mode::Side2Ego),
            "top2ego" => Ok(Mode::Top2Ego),
            other => Err(Error::Config(format!("unknown mode {other:?}; expected side2ego or top2ego"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One exocentric/egocentric pair with segmentations, stored at 8 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub exo: RgbImage,
    pub ego: RgbImage,
    pub exo_seg: GrayImage,
    pub ego_seg: GrayImage,
    pub class_id: usize,
    pub seed: u64,
}

impl ViewPair {
    pub fn render(seed: u64, mode: Mode, resolution: u32) -> Self {
        let scene = sample_scene(seed);
        let (exo, exo_seg) = render_exo(&scene, mode.exo_mode(), resolution);
        let (ego, ego_seg) = render_ego(&scene, resolution);
        ViewPair { exo, ego, exo_seg, ego_seg, class_id: scene.class_id, seed }
    }

    pub fn resolution(&self) -> u32 {
        self.exo.width()
    }

    pub fn exo_tensor<T: Element>(&self) -> Tensor<T> {
        rgb_to_tensor(&self.exo)
    }

    pub fn ego_tensor<T: Element>(&self) -> Tensor<T> {
        rgb_to_tensor(&self.ego)
    }
}

/// `[3, H, W]` tensor with `0 → −1` and `255 → 1`.
pub fn rgb_to_tensor<T: Element>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let raw = img.as_raw();
    Tensor::from_fn(vec![3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        T::from_f64_lossy(raw[p * 3 + c] as f64 / 127.5 - 1.0)
    })
}

/// Inverse of [`rgb_to_tensor`] for a `[3, H, W]` tensor, clamping to range.
pub fn tensor_to_rgb<T: Element>(t: &Tensor<T>) -> Result<RgbImage> {
    let &[3, h, w] = t.shape() else {
        return Err(Error::Dataset(format!("expected a [3, H, W] image tensor, got {:?}", t.shape())));
    };
    let data = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        let q = |c: usize| ((data[c * h * w + p].as_f64() + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
        image::Rgb([q(0), q(1), q(2)])
    }))
}

/// `[1, H, W]` conditioning channel: class `k` maps to `2k/(K−1) − 1`.
pub fn seg_to_tensor<T: Element>(seg: &GrayImage) -> Tensor<T> {
    let (w, h) = seg.dimensions();
    let scale = 2.0 / (NUM_SEG_CLASSES - 1) as f64;
    Tensor::from_fn(vec![1, h as usize, w as usize], |i| T::from_f64_lossy(seg.as_raw()[i] as f64 * scale - 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub exo: String,
    pub ego: String,
    pub exo_seg: String,
    pub ego_seg: String,
    pub class_id: usize,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub mode: Mode,
    pub resolution: u32,
    pub num_classes: usize,
    pub num_seg_classes: usize,
    pub base_seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Train records first, then test records.
    pub records: Vec<RecordEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub mode: Mode,
    pub resolution: u32,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: Mode::Top2Ego,
            resolution: DEFAULT_RESOLUTION,
            train_size: DEFAULT_TRAIN_SIZE,
            test_size: DEFAULT_TEST_SIZE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 8 {
            return Err(Error::Config(format!("resolution must be at least 8, got {}", self.resolution)));
        }
        if self.train_size as u64 >= TEST_SEED_OFFSET || self.seed.checked_add(2 * TEST_SEED_OFFSET).is_none() {
            return Err(Error::Config("seed range would overlap or overflow".into()));
        }
        Ok(())
    }

    pub fn train_seed(&self, i: usize) -> u64 {
        self.seed + i as u64
    }

    pub fn test_seed(&self, i: usize) -> u64 {
        self.seed + TEST_SEED_OFFSET + i as u64
    }

    /// Rendered pairs for a split, in manifest order.
    pub fn render_split(&self, split: Split) -> Vec<ViewPair> {
        let (n, seed): (usize, &dyn Fn(usize) -> u64) = match split {
            Split::Train => (self.train_size, &|i| self.train_seed(i)),
            Split::Test => (self.test_size, &|i| self.test_seed(i)),
        };
        (0..n).map(|i| ViewPair::render(seed(i), self.mode, self.resolution)).collect()
    }
}

/// A dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<ViewPair>,
    pub test: Vec<ViewPair>,
}

impl Dataset {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let train = config.render_split(Split::Train);
        let test = config.render_split(Split::Test);
        let records = train
            .iter()
            .map(|p| (Split::Train, p))
            .chain(test.iter().map(|p| (Split::Test, p)))
            .enumerate()
            .map(|(i, (split, p))| entry(i, split, p))
            .collect();
        let manifest = DatasetManifest {
            mode: config.mode,
            resolution: config.resolution,
            num_classes: NUM_CLASSES,
            num_seg_classes: NUM_SEG_CLASSES,
            base_seed: config.seed,
            train_size: config.train_size,
            test_size: config.test_size,
            records,
        };
        Ok(Dataset { manifest, train, test })
    }

    pub fn split(&self, split: Split) -> &[ViewPair] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_dataset(&self.manifest, self.train.iter().chain(&self.test), dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_dataset(dir)
    }
}

fn entry(index: usize, split: Split, pair: &ViewPair) -> RecordEntry {
    let stem = format!(
        "{}/{index:06}",
        match split {
            Split::Train => "train",
            Split::Test => "test",
        }
    );
    RecordEntry {
        exo: format!("{stem}_exo.png"),
        ego: format!("{stem}_ego.png"),
        exo_seg: format!("{stem}_exo_seg.png"),
        ego_seg: format!("{stem}_ego_seg.png"),
        class_id: pair.class_id,
        seed: pair.seed,
        split,
    }
}

fn save_png<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_dataset<'a>(manifest: &DatasetManifest, pairs: impl IntoIterator<Item = &'a ViewPair>, dir: &Path) -> Result<()> {
    for sub in ["train", "test"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut count = 0;
    for (rec, pair) in manifest.records.iter().zip(pairs) {
        save_png(&pair.exo, &dir.join(&rec.exo))?;
        save_png(&pair.ego, &dir.join(&rec.ego))?;
        save_png(&pair.exo_seg, &dir.join(&rec.exo_seg))?;
        save_png(&pair.ego_seg, &dir.join(&rec.ego_seg))?;
        count += 1;
    }
    if count != manifest.records.len() {
        return Err(Error::Dataset(format!("manifest lists {} records but {count} pairs were given", manifest.records.len())));
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn load(dir: &Path, name: &str, record: usize) -> Result<image::DynamicImage> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile { path, record });
    }
    image::open(&path).map_err(|source| Error::Image { path, source })
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile { path, record: usize::MAX });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.records.len() != manifest.train_size + manifest.test_size {
        return Err(Error::Dataset(format!(
            "manifest has {} records but train_size + test_size = {}",
            manifest.records.len(),
            manifest.train_size + manifest.test_size
        )));
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let res = manifest.resolution;
    let mut train = Vec::with_capacity(manifest.train_size);
    let mut test = Vec::with_capacity(manifest.test_size);
    for (i, rec) in manifest.records.iter().enumerate() {
        let expected = if i < manifest.train_size { Split::Train } else { Split::Test };
        if rec.split != expected {
            return Err(Error::Dataset(format!("record {i} is listed as {:?} out of order", rec.split)));
        }
        if rec.class_id >= manifest.num_classes {
            return Err(Error::Dataset(format!("record {i} has class {} >= {}", rec.class_id, manifest.num_classes)));
        }
        let exo = load(dir, &rec.exo, i)?.into_rgb8();
        let ego = load(dir, &rec.ego, i)?.into_rgb8();
        let exo_seg = load(dir, &rec.exo_seg, i)?.into_luma8();
        let ego_seg = load(dir, &rec.ego_seg, i)?.into_luma8();
        for (name, dims) in [
            (&rec.exo, exo.dimensions()),
            (&rec.ego, ego.dimensions()),
            (&rec.exo_seg, exo_seg.dimensions()),
            (&rec.ego_seg, ego_seg.dimensions()),
        ] {
            if dims != (res, res) {
                return Err(Error::Dataset(format!("record {i}: {name} is {dims:?}, manifest says {res}x{res}")));
            }
        }
        for (name, seg) in [(&rec.exo_seg, &exo_seg), (&rec.ego_seg, &ego_seg)] {
            if let Some(v) = seg.as_raw().iter().find(|&&v| v as usize >= manifest.num_seg_classes) {
                return Err(Error::Dataset(format!("record {i}: {name} has segmentation value {v}")));
            }
        }
        let pair = ViewPair { exo, ego, exo_seg, ego_seg, class_id: rec.class_id, seed: rec.seed };
        match expected {
            Split::Train => train.push(pair),
            Split::Test => test.push(pair),
        }
    }
    Ok(Dataset { manifest, train, test })
}
