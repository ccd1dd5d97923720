//! Parameterized floor scenes.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 8;
/// Background plus one class per shape kind.
pub const NUM_SEG_CLASSES: usize = 4;
pub const MAX_OBJECTS: usize = 5;

/// Horizontal field of view of the egocentric camera.
pub const EGO_FOV: f64 = FRAC_PI_2;
/// Objects are spread over this many angular sectors of the ego view so
/// that each one stays at least partly visible.
const SECTORS: usize = MAX_OBJECTS;
const SECTOR_SPAN: f64 = 85.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Disc,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Box, ShapeKind::Disc, ShapeKind::Triangle];

    /// Segmentation label.
    pub fn seg_class(self) -> u8 {
        match self {
            ShapeKind::Box => 1,
            ShapeKind::Disc => 2,
            ShapeKind::Triangle => 3,
        }
    }

    /// Whether normalized sprite coordinates `(u, v)` lie inside the shape.
    /// `v = +1` is the top (or +y on the floor); the triangle's apex is there.
    pub fn contains(self, u: f64, v: f64) -> bool {
        match self {
            ShapeKind::Box => u.abs() <= 1.0 && v.abs() <= 1.0,
            ShapeKind::Disc => u * u + v * v <= 1.0,
            ShapeKind::Triangle => v.abs() <= 1.0 && u.abs() <= (1.0 - v) / 2.0,
        }
    }

    /// Hue range of the kind's palette.
    fn hue_range(self) -> (f64, f64) {
        match self {
            ShapeKind::Box => (-0.03, 0.06),
            ShapeKind::Disc => (0.55, 0.66),
            ShapeKind::Triangle => (0.17, 0.33),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ShapeKind,
    pub color: [f64; 3],
    /// Floor position in the unit square.
    pub position: (f64, f64),
    /// Half extent (radius for discs).
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: (f64, f64),
    /// Radians; `π/2` looks along +y.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub class_id: usize,
    pub objects: Vec<SceneObject>,
    pub agent: Agent,
    pub floor_color: [f64; 3],
    pub texture_seed: u64,
}

/// Class from the object multiset: bit 0 = a box is present, bit 1 = a disc
/// is present, bit 2 = three or more objects.
pub fn class_of(objects: &[SceneObject]) -> usize {
    let has = |k| objects.iter().any(|o| o.kind == k) as usize;
    has(ShapeKind::Box) + 2 * has(ShapeKind::Disc) + 4 * (objects.len() >= 3) as usize
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Deterministic scene for a seed.
pub fn sample_scene(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent =
        Agent { position: (rng.random_range(0.4..0.6), rng.random_range(0.04..0.12)), heading: FRAC_PI_2 + rng.random_range(-0.12..0.12) };
    let count = rng.random_range(1..=MAX_OBJECTS);
    let mut sectors: Vec<usize> = (0..SECTORS).collect();
    sectors.shuffle(&mut rng);
    let sector_width = SECTOR_SPAN / SECTORS as f64;
    let mut objects = Vec::with_capacity(count);
    for &sector in &sectors[..count] {
        let kind = ShapeKind::ALL[rng.random_range(0..3)];
        let (h0, h1) = kind.hue_range();
        let color = hsv_to_rgb(rng.random_range(h0..h1), rng.random_range(0.65..0.95), rng.random_range(0.7..0.95));
        let size = rng.random_range(0.045..0.07);
        // Angle relative to the heading, positive to the left.
        let rel = -SECTOR_SPAN / 2.0 + (sector as f64 + 0.5) * sector_width + rng.random_range(-0.03..0.03);
        let dir = (agent.heading + rel).sin_cos();
        let (dy, dx) = dir;
        let max_dist = max_distance_inside(agent.position, (dx, dy), size).min(0.7);
        let min_dist = 0.35f64.min(max_dist);
        let dist = if max_dist > min_dist { rng.random_range(min_dist..max_dist) } else { min_dist };
        objects.push(SceneObject { kind, color, position: (agent.position.0 + dist * dx, agent.position.1 + dist * dy), size });
    }
    let floor_color = hsv_to_rgb(rng.random_range(0.0..1.0), rng.random_range(0.15..0.4), rng.random_range(0.4..0.6));
    let texture_seed = rng.random();
    SceneSpec { seed, class_id: class_of(&objects), objects, agent, floor_color, texture_seed }
}

/// Largest distance along `dir` from `start` that keeps a centre at least
/// `margin` inside the unit square.
fn max_distance_inside(start: (f64, f64), dir: (f64, f64), margin: f64) -> f64 {
    let mut t = f64::INFINITY;
    for (p, d) in [(start.0, dir.0), (start.1, dir.1)] {
        if d > 1e-12 {
            t = t.min((1.0 - margin - p) / d);
        } else if d < -1e-12 {
            t = t.min((margin - p) / d);
        }
    }
    t.max(0.0)
}

impl SceneSpec {
    /// A scene with no objects, for rendering tests.
    pub fn empty(seed: u64) -> Self {
        let mut s = sample_scene(seed);
        s.objects.clear();
        s.class_id = class_of(&s.objects);
        s
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(format!("{} objects", self.objects.len()));
        }
        let inside = |(x, y): (f64, f64)| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y);
        if !inside(self.agent.position) {
            return Err(format!("agent at {:?}", self.agent.position));
        }
        for o in &self.objects {
            if !inside(o.position) {
                return Err(format!("object at {:?}", o.position));
            }
        }
        if self.class_id >= NUM_CLASSES || self.class_id != class_of(&self.objects) {
            return Err(format!("class {}", self.class_id));
        }
        Ok(())
    }
}
