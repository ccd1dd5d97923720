use image::{GrayImage, Rgb, RgbImage};
use pgan_core::nets::Gen;
use pgan_core::synthdata::{tensor_to_rgb, ViewPair, NUM_SEG_CLASSES};
use pgan_core::trainer::{Batch, TrainState};
use pgan_core::{Element, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pixels of white space around and between cells.
pub const GRID_MARGIN: u32 = 2;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

/// `(width, height)` of a grid with `columns × rows` cells of side `res`.
pub fn grid_size(columns: u32, rows: u32, res: u32) -> (u32, u32) {
    (columns * res + (columns + 1) * GRID_MARGIN, rows * res + (rows + 1) * GRID_MARGIN)
}

/// `k` distinct indices below `n`, drawn from `seed`.
pub fn select_rows(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("grid needs 1..={n} rows, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, k).into_vec())
}

fn seg_to_rgb(seg: &GrayImage) -> RgbImage {
    let step = 255 / (NUM_SEG_CLASSES as u32 - 1);
    RgbImage::from_fn(seg.width(), seg.height(), |x, y| {
        let v = (seg.get_pixel(x, y)[0] as u32 * step).min(255) as u8;
        Rgb([v, v, v])
    })
}

/// `G₁(exo)` for one pair, run as a batch of one.
pub fn generate_cell<T: Element>(state: &TrainState<T>, pair: &ViewPair) -> Result<RgbImage> {
    let batch = Batch::<T>::from_pairs(std::slice::from_ref(pair), state.config.seg_conditioning)?;
    let fake = state.generate(Gen::G1, &batch)?;
    let shape = fake.shape()[1..].to_vec();
    tensor_to_rgb(&fake.reshape(shape)?)
}

/// One row per pair: `exo | generated ego | ground-truth ego`, plus the
/// conditioning segmentation when the checkpoint uses one.
pub fn render_grid<T: Element>(state: &TrainState<T>, pairs: &[&ViewPair]) -> Result<RgbImage> {
    let Some(first) = pairs.first() else {
        return Err(Error::Config("grid needs at least one row".into()));
    };
    let res = first.resolution();
    let columns = if state.config.seg_conditioning { 4 } else { 3 };
    let (w, h) = grid_size(columns, pairs.len() as u32, res);
    let mut canvas = RgbImage::from_pixel(w, h, BACKGROUND);
    for (r, pair) in pairs.iter().enumerate() {
        if pair.resolution() != res {
            return Err(Error::Config(format!("grid rows mix resolutions {res} and {}", pair.resolution())));
        }
        let mut cells = vec![pair.exo.clone(), generate_cell(state, pair)?, pair.ego.clone()];
        if state.config.seg_conditioning {
            cells.push(seg_to_rgb(&pair.ego_seg));
        }
        let y = GRID_MARGIN + r as u32 * (res + GRID_MARGIN);
        for (c, cell) in cells.iter().enumerate() {
            let x = GRID_MARGIN + c as u32 * (res + GRID_MARGIN);
            image::imageops::replace(&mut canvas, cell, x as i64, y as i64);
        }
    }
    Ok(canvas)
}
