//! Exocentric and egocentric rasterizers.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{SceneObject, SceneSpec, EGO_FOV};

/// Vertical foreshortening of the oblique side view.
pub const SIDE_FORESHORTENING: f64 = 0.5;
pub const CAMERA_HEIGHT: f64 = 0.1;
pub const NEAR_PLANE: f64 = 0.05;
const TEXTURE_CELLS: usize = 8;
const TEXTURE_AMPLITUDE: f64 = 0.12;
const AGENT_COLOR: [f64; 3] = [0.08, 0.08, 0.1];
const OUTSIDE_FLOOR: [f64; 3] = [0.28, 0.28, 0.3];
const SKY_TOP: [f64; 3] = [0.5, 0.62, 0.8];
const SKY_HORIZON: [f64; 3] = [0.85, 0.88, 0.92];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExoMode {
    Top,
    Side,
}

struct Canvas {
    size: u32,
    rgb: Vec<[f64; 3]>,
    seg: Vec<u8>,
}

impl Canvas {
    fn new(size: u32) -> Self {
        let n = (size * size) as usize;
        Canvas { size, rgb: vec![[0.0; 3]; n], seg: vec![0; n] }
    }

    fn put(&mut self, col: u32, row: u32, color: [f64; 3], seg: u8) {
        let i = (row * self.size + col) as usize;
        self.rgb[i] = color;
        self.seg[i] = seg;
    }

    /// Paints a sprite: `(u, v)` of each pixel centre comes from `map`.
    fn sprite(&mut self, bounds: [f64; 4], obj: &SceneObject, map: impl Fn(f64, f64) -> (f64, f64)) {
        let [c0, c1, r0, r1] = bounds;
        let size = self.size;
        let lo = |x: f64| x.floor().max(0.0) as u32;
        let hi = |x: f64| (x.ceil().max(0.0) as u32).min(size);
        for row in lo(r0)..hi(r1) {
            for col in lo(c0)..hi(c1) {
                let (u, v) = map(col as f64 + 0.5, row as f64 + 0.5);
                if obj.kind.contains(u, v) {
                    self.put(col, row, obj.color, obj.kind.seg_class());
                }
            }
        }
    }

    fn finish(self) -> (RgbImage, GrayImage) {
        let q = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
        let rgb = RgbImage::from_fn(self.size, self.size, |x, y| {
            let c = self.rgb[(y * self.size + x) as usize];
            Rgb([q(c[0]), q(c[1]), q(c[2])])
        });
        let seg = GrayImage::from_fn(self.size, self.size, |x, y| Luma([self.seg[(y * self.size + x) as usize]]));
        (rgb, seg)
    }
}

/// Smooth value noise over the unit square.
struct FloorTexture {
    lattice: Vec<f64>,
    base: [f64; 3],
}

impl FloorTexture {
    fn new(scene: &SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.texture_seed);
        let n = (TEXTURE_CELLS + 1) * (TEXTURE_CELLS + 1);
        FloorTexture { lattice: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), base: scene.floor_color }
    }

    fn color(&self, x: f64, y: f64) -> [f64; 3] {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return OUTSIDE_FLOOR;
        }
        let g = TEXTURE_CELLS as f64;
        let (fx, fy) = ((x * g).min(g - 1e-9), (y * g).min(g - 1e-9));
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let at = |i: usize, j: usize| self.lattice[j * (TEXTURE_CELLS + 1) + i];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        let n = top * (1.0 - ty) + bottom * ty;
        self.base.map(|c| c * (1.0 + TEXTURE_AMPLITUDE * n))
    }
}

fn sky(t: f64) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = SKY_TOP[k] * (1.0 - t) + SKY_HORIZON[k] * t;
    }
    c
}

/// Renders the exocentric view and its segmentation.
pub fn render_exo(scene: &SceneSpec, mode: ExoMode, size: u32) -> (RgbImage, GrayImage) {
    match mode {
        ExoMode::Top => render_top(scene, size),
        ExoMode::Side => render_side(scene, size),
    }
}

fn render_top(scene: &SceneSpec, size: u32) -> (RgbImage, GrayImage) {
    let s = size as f64;
    let tex = FloorTexture::new(scene);
    let mut canvas = Canvas::new(size);
    for row in 0..size {
        for col in 0..size {
            let (x, y) = ((col as f64 + 0.5) / s, 1.0 - (row as f64 + 0.5) / s);
            canvas.put(col, row, tex.color(x, y), 0);
        }
    }
    let (ax, ay) = scene.agent.position;
    let marker = 0.03;
    for row in 0..size {
        for col in 0..size {
            let (x, y) = ((col as f64 + 0.5) / s, 1.0 - (row as f64 + 0.5) / s);
            if (x - ax).powi(2) + (y - ay).powi(2) <= marker * marker {
                canvas.put(col, row, AGENT_COLOR, 0);
            }
        }
    }
    for obj in &scene.objects {
        let (px, py) = obj.position;
        let r = obj.size;
        let bounds = [(px - r) * s, (px + r) * s, (1.0 - py - r) * s, (1.0 - py + r) * s];
        canvas.sprite(bounds, obj, |c, rw| ((c / s - px) / r, (1.0 - rw / s - py) / r));
    }
    canvas.finish()
}

fn render_side(scene: &SceneSpec, size: u32) -> (RgbImage, GrayImage) {
    let s = size as f64;
    let k = SIDE_FORESHORTENING;
    let tex = FloorTexture::new(scene);
    let mut canvas = Canvas::new(size);
    for row in 0..size {
        let big_y = 1.0 - (row as f64 + 0.5) / s;
        for col in 0..size {
            let color = if big_y < k { tex.color((col as f64 + 0.5) / s, big_y / k) } else { sky((1.0 - big_y) / (1.0 - k)) };
            canvas.put(col, row, color, 0);
        }
    }
    let mut order: Vec<&SceneObject> = scene.objects.iter().collect();
    order.sort_by(|a, b| b.position.1.total_cmp(&a.position.1));
    let (ax, ay) = scene.agent.position;
    let marker = 0.02;
    let (mx, my) = (ax, k * ay + marker);
    for row in 0..size {
        for col in 0..size {
            let (x, y) = ((col as f64 + 0.5) / s, 1.0 - (row as f64 + 0.5) / s);
            if (x - mx).powi(2) + (y - my).powi(2) <= marker * marker {
                canvas.put(col, row, AGENT_COLOR, 0);
            }
        }
    }
    for obj in order {
        let (px, py) = obj.position;
        let r = obj.size;
        let cy = k * py + r;
        let bounds = [(px - r) * s, (px + r) * s, (1.0 - cy - r) * s, (1.0 - cy + r) * s];
        canvas.sprite(bounds, obj, |c, rw| ((c / s - px) / r, (1.0 - rw / s - cy) / r));
    }
    canvas.finish()
}

/// Normalizes a heading into `[0, 2π)` on a 1e-9 grid so that headings one
/// turn apart give the same camera.
fn canonical_heading(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::TAU);
    let q = (t * 1e9).round() / 1e9;
    if q >= std::f64::consts::TAU {
        0.0
    } else {
        q
    }
}

/// Renders the agent's first-person perspective view and its segmentation.
pub fn render_ego(scene: &SceneSpec, size: u32) -> (RgbImage, GrayImage) {
    let s = size as f64;
    let half = s / 2.0;
    let focal = half / (EGO_FOV / 2.0).tan();
    let (sin_h, cos_h) = canonical_heading(scene.agent.heading).sin_cos();
    let forward = (cos_h, sin_h);
    let right = (sin_h, -cos_h);
    let (ax, ay) = scene.agent.position;
    let tex = FloorTexture::new(scene);
    let mut canvas = Canvas::new(size);
    for row in 0..size {
        let dy = row as f64 + 0.5 - half;
        for col in 0..size {
            let color = if dy > 0.0 {
                let z = focal * CAMERA_HEIGHT / dy;
                let x = (col as f64 + 0.5 - half) * z / focal;
                tex.color(ax + z * forward.0 + x * right.0, ay + z * forward.1 + x * right.1)
            } else {
                sky((row as f64 + 0.5) / half)
            };
            canvas.put(col, row, color, 0);
        }
    }
    let mut visible: Vec<(f64, f64, &SceneObject)> = scene
        .objects
        .iter()
        .filter_map(|o| {
            let (vx, vy) = (o.position.0 - ax, o.position.1 - ay);
            let z = vx * forward.0 + vy * forward.1;
            let x = vx * right.0 + vy * right.1;
            (z > NEAR_PLANE).then_some((z, x, o))
        })
        .collect();
    visible.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (z, x, obj) in visible {
        let r = focal * obj.size / z;
        let uc = half + focal * x / z;
        let vc = half + focal * (CAMERA_HEIGHT - obj.size) / z;
        canvas.sprite([uc - r, uc + r, vc - r, vc + r], obj, |c, rw| ((c - uc) / r, (vc - rw) / r));
    }
    canvas.finish()
}
