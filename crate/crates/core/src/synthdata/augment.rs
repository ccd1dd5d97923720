//! Paired geometric jitter.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ViewPair;

pub const CROP_FRACTION: f64 = 7.0 / 8.0;
pub const FLIP_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip: bool,
    pub crop: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { flip: true, crop: true }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig { flip: false, crop: false }
    }
}

/// One flip decision for the whole pair and one crop offset per view; each
/// view's image and segmentation share the geometry.
pub fn augment<R: Rng + ?Sized>(pair: &ViewPair, config: &AugmentConfig, rng: &mut R) -> ViewPair {
    let flip = config.flip && rng.random_bool(FLIP_PROBABILITY);
    let mut view = |img: &RgbImage, seg: &GrayImage| {
        let (w, h) = img.dimensions();
        let crop = config.crop.then(|| {
            let side = ((w.min(h) as f64) * CROP_FRACTION).round() as u32;
            (side, rng.random_range(0..=w - side), rng.random_range(0..=h - side))
        });
        transform(img, seg, flip, crop)
    };
    let (exo, exo_seg) = view(&pair.exo, &pair.exo_seg);
    let (ego, ego_seg) = view(&pair.ego, &pair.ego_seg);
    ViewPair { exo, ego, exo_seg, ego_seg, class_id: pair.class_id, seed: pair.seed }
}

/// Horizontal mirror of both views and both segmentations.
pub fn flip_pair(pair: &ViewPair) -> ViewPair {
    let (exo, exo_seg) = transform(&pair.exo, &pair.exo_seg, true, None);
    let (ego, ego_seg) = transform(&pair.ego, &pair.ego_seg, true, None);
    ViewPair { exo, ego, exo_seg, ego_seg, ..pair.clone() }
}

/// Source coordinate for output pixel `i` when resampling `src` pixels onto
/// `dst`.
fn source_coord(i: u32, src: u32, dst: u32) -> f64 {
    (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5
}

fn transform(img: &RgbImage, seg: &GrayImage, flip: bool, crop: Option<(u32, u32, u32)>) -> (RgbImage, GrayImage) {
    let (w, h) = img.dimensions();
    let mut img = img.clone();
    let mut seg = seg.clone();
    if flip {
        img = image::imageops::flip_horizontal(&img);
        seg = image::imageops::flip_horizontal(&seg);
    }
    let Some((side, ox, oy)) = crop else {
        return (img, seg);
    };
    let px = |x: i64, y: i64| {
        let x = x.clamp(0, side as i64 - 1) as u32 + ox;
        let y = y.clamp(0, side as i64 - 1) as u32 + oy;
        img.get_pixel(x, y).0
    };
    let out = RgbImage::from_fn(w, h, |x, y| {
        let sx = source_coord(x, side, w);
        let sy = source_coord(y, side, h);
        let (x0, y0) = (sx.floor(), sy.floor());
        let (tx, ty) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut c = [0u8; 3];
        for (k, c) in c.iter_mut().enumerate() {
            let a = px(x0, y0)[k] as f64 * (1.0 - tx) + px(x0 + 1, y0)[k] as f64 * tx;
            let b = px(x0, y0 + 1)[k] as f64 * (1.0 - tx) + px(x0 + 1, y0 + 1)[k] as f64 * tx;
            *c = (a * (1.0 - ty) + b * ty).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(c)
    });
    let out_seg = GrayImage::from_fn(w, h, |x, y| {
        let sx = ((x as f64 + 0.5) * side as f64 / w as f64).floor() as u32;
        let sy = ((y as f64 + 0.5) * side as f64 / h as f64).floor() as u32;
        Luma(seg.get_pixel(sx.min(side - 1) + ox, sy.min(side - 1) + oy).0)
    });
    (out, out_seg)
}
