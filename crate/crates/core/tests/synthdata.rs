use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;

use image::{GrayImage, Luma, Rgb, RgbImage};
use pgan_core::synthdata::*;
use pgan_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scene_with(objects: Vec<SceneObject>, agent: Agent) -> SceneSpec {
    let mut s = SceneSpec::empty(5);
    s.objects = objects;
    s.agent = agent;
    s.class_id = class_of(&s.objects);
    s
}

fn object(kind: ShapeKind, position: (f64, f64), size: f64) -> SceneObject {
    SceneObject { kind, color: [0.9, 0.2, 0.1], position, size }
}

fn seg_columns(seg: &GrayImage, class: u8) -> Vec<u32> {
    let mut cols: Vec<u32> = seg.enumerate_pixels().filter(|(_, _, p)| p.0[0] == class).map(|(x, _, _)| x).collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

#[test]
fn empty_scene_is_pure_floor() {
    let scene = SceneSpec::empty(3);
    for mode in [ExoMode::Top, ExoMode::Side] {
        let (_, seg) = render_exo(&scene, mode, 32);
        assert!(seg.pixels().all(|p| p.0[0] == 0));
    }
    let (_, seg) = render_ego(&scene, 32);
    assert!(seg.pixels().all(|p| p.0[0] == 0));
}

#[test]
fn centered_disc_matches_rasterization_oracle() {
    let agent = Agent { position: (0.05, 0.05), heading: FRAC_PI_2 };
    let scene = scene_with(vec![object(ShapeKind::Disc, (0.5, 0.5), 0.25)], agent);
    let (img, seg) = render_exo(&scene, ExoMode::Top, 16);
    let expected_color = Rgb([230u8, 51, 26]);
    for r in 0..16u32 {
        for c in 0..16u32 {
            let x = (c as f64 + 0.5) / 16.0 - 0.5;
            let y = 0.5 - (r as f64 + 0.5) / 16.0;
            let inside = x * x + y * y <= 0.0625;
            assert_eq!(seg.get_pixel(c, r).0[0] == 2, inside, "pixel ({c},{r})");
            if inside {
                assert_eq!(*img.get_pixel(c, r), expected_color);
            }
        }
    }
    let cols = seg_columns(&seg, 2);
    assert_eq!((cols[0], *cols.last().unwrap()), (4, 11));
}

#[test]
fn renders_are_deterministic() {
    let scene = sample_scene(99);
    for mode in [ExoMode::Top, ExoMode::Side] {
        assert_eq!(render_exo(&scene, mode, 32), render_exo(&scene, mode, 32));
    }
    assert_eq!(render_ego(&scene, 32), render_ego(&scene, 32));
    assert_eq!(ViewPair::render(99, Mode::Side2Ego, 32), ViewPair::render(99, Mode::Side2Ego, 32));
}

#[test]
fn ego_size_halves_when_distance_doubles() {
    let res = 64u32;
    let size = 0.05;
    let agent = Agent { position: (0.5, 0.05), heading: FRAC_PI_2 };
    let focal = res as f64 / 2.0 / (EGO_FOV / 2.0).tan();
    let mut widths = Vec::new();
    for d in [0.4, 0.8] {
        let scene = scene_with(vec![object(ShapeKind::Box, (0.5, 0.05 + d), size)], agent);
        let (_, seg) = render_ego(&scene, res);
        let w = seg_columns(&seg, 1).len() as f64;
        assert!((w - 2.0 * focal * size / d).abs() <= 1.0, "d={d}: width {w}");
        widths.push(w);
    }
    assert!((widths[0] - 2.0 * widths[1]).abs() <= 1.0, "{widths:?}");
}

#[test]
fn objects_behind_the_agent_are_not_drawn() {
    let agent = Agent { position: (0.5, 0.4), heading: FRAC_PI_2 };
    let with = scene_with(vec![object(ShapeKind::Triangle, (0.5, 0.1), 0.08)], agent);
    let without = scene_with(vec![], agent);
    let (img, seg) = render_ego(&with, 32);
    assert!(seg.pixels().all(|p| p.0[0] == 0));
    assert_eq!(img, render_ego(&without, 32).0);
}

#[test]
fn full_turn_of_heading_gives_identical_ego_raster() {
    for seed in 0..20 {
        let scene = sample_scene(seed);
        let mut turned = scene.clone();
        turned.agent.heading += TAU;
        assert_eq!(render_ego(&scene, 32), render_ego(&turned, 32), "seed {seed}");
    }
}

#[test]
fn object_colors_are_shared_across_views() {
    let mut checked = 0;
    for seed in 0..50 {
        let pair = ViewPair::render(seed, Mode::Top2Ego, 32);
        let exo: std::collections::HashSet<_> = pair.exo.pixels().collect();
        let ego: std::collections::HashSet<_> = pair.ego.pixels().collect();
        for obj in &sample_scene(seed).objects {
            let q = Rgb(obj.color.map(|c| (c * 255.0).round() as u8));
            if exo.contains(&q) && ego.contains(&q) {
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "{checked}");
}

fn footprint_ok(scene: &SceneSpec, seg: &GrayImage, map: impl Fn(&SceneObject, f64, f64) -> (f64, f64)) -> bool {
    seg.enumerate_pixels().all(|(c, r, p)| {
        let k = p.0[0];
        k == 0
            || scene.objects.iter().any(|o| {
                let (u, v) = map(o, c as f64 + 0.5, r as f64 + 0.5);
                o.kind.seg_class() == k && o.kind.contains(u, v)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmentation_stays_inside_projected_footprints(seed in any::<u64>()) {
        let scene = sample_scene(seed);
        let s = 32.0;
        let (_, top) = render_exo(&scene, ExoMode::Top, 32);
        prop_assert!(footprint_ok(&scene, &top, |o, c, r| ((c / s - o.position.0) / o.size, (1.0 - r / s - o.position.1) / o.size)));
        let (_, side) = render_exo(&scene, ExoMode::Side, 32);
        let side_ok = footprint_ok(&scene, &side, |o, c, r| {
            let cy = SIDE_FORESHORTENING * o.position.1 + o.size;
            ((c / s - o.position.0) / o.size, (1.0 - r / s - cy) / o.size)
        });
        prop_assert!(side_ok);
        let (sin_h, cos_h) = scene.agent.heading.sin_cos();
        let focal = 16.0 / (EGO_FOV / 2.0).tan();
        let (_, ego) = render_ego(&scene, 32);
        let ego_ok = footprint_ok(&scene, &ego, |o, c, r| {
            let (vx, vy) = (o.position.0 - scene.agent.position.0, o.position.1 - scene.agent.position.1);
            let z = vx * cos_h + vy * sin_h;
            let x = vx * sin_h - vy * cos_h;
            let rad = focal * o.size / z;
            let (uc, vc) = (16.0 + focal * x / z, 16.0 + focal * (CAMERA_HEIGHT - o.size) / z);
            ((c - uc) / rad, (vc - r) / rad)
        });
        prop_assert!(ego_ok);
    }

    #[test]
    fn pair_invariants_hold(seed in any::<u64>()) {
        let pair = ViewPair::render(seed, Mode::Side2Ego, 32);
        for dims in [pair.exo.dimensions(), pair.ego.dimensions(), pair.exo_seg.dimensions(), pair.ego_seg.dimensions()] {
            prop_assert_eq!(dims, (32, 32));
        }
        prop_assert!(pair.exo_seg.pixels().chain(pair.ego_seg.pixels()).all(|p| (p.0[0] as usize) < NUM_SEG_CLASSES));
        prop_assert!(pair.class_id < NUM_CLASSES);
        let t = pair.exo_tensor::<f32>();
        prop_assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert_eq!(tensor_to_rgb(&t).unwrap(), pair.exo);
    }
}

fn marker_pair() -> ViewPair {
    let mut exo = RgbImage::from_pixel(32, 32, Rgb([0, 0, 0]));
    let mut exo_seg = GrayImage::new(32, 32);
    exo.put_pixel(9, 20, Rgb([255, 255, 255]));
    exo_seg.put_pixel(9, 20, Luma([3]));
    let mut ego = exo.clone();
    let mut ego_seg = exo_seg.clone();
    ego.put_pixel(9, 20, Rgb([0, 0, 0]));
    ego_seg.put_pixel(9, 20, Luma([0]));
    ego.put_pixel(25, 4, Rgb([255, 255, 255]));
    ego_seg.put_pixel(25, 4, Luma([3]));
    ViewPair { exo, ego, exo_seg, ego_seg, class_id: 6, seed: 1 }
}

fn brightest(img: &RgbImage) -> (i64, i64) {
    let (x, y, _) = img.enumerate_pixels().max_by_key(|(_, _, p)| p.0[0]).unwrap();
    (x as i64, y as i64)
}

fn marked(seg: &GrayImage) -> Vec<(i64, i64)> {
    seg.enumerate_pixels().filter(|(_, _, p)| p.0[0] == 3).map(|(x, y, _)| (x as i64, y as i64)).collect()
}

#[test]
fn flip_is_an_involution() {
    let pair = ViewPair::render(11, Mode::Top2Ego, 32);
    let once = flip_pair(&pair);
    assert_ne!(once, pair);
    assert_eq!(flip_pair(&once), pair);
    assert_eq!(marked(&flip_pair(&marker_pair()).exo_seg), vec![(22, 20)]);
}

#[test]
fn disabled_augmentation_is_identity() {
    let pair = ViewPair::render(12, Mode::Side2Ego, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        assert_eq!(augment(&pair, &AugmentConfig::disabled(), &mut rng), pair);
    }
}

#[test]
fn marker_pixel_follows_the_same_geometry_in_image_and_seg() {
    let pair = marker_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut flips = 0;
    let mut exo_moves = std::collections::HashSet::new();
    for _ in 0..200 {
        let out = augment(&pair, &AugmentConfig::default(), &mut rng);
        assert_eq!(out.class_id, pair.class_id);
        for (img, seg) in [(&out.exo, &out.exo_seg), (&out.ego, &out.ego_seg)] {
            let (bx, by) = brightest(img);
            let m = marked(seg);
            assert!(!m.is_empty());
            assert!(m.iter().any(|&(x, y)| (x - bx).abs() <= 1 && (y - by).abs() <= 1), "{m:?} vs {bx},{by}");
        }
        let (ex, ey) = brightest(&out.exo);
        if ex > 16 {
            flips += 1;
        }
        exo_moves.insert((ex, ey));
        let (gx, _) = brightest(&out.ego);
        assert_eq!(ex > 16, gx < 16, "one flip decision per pair");
    }
    assert!((60..140).contains(&flips), "{flips}");
    assert!(exo_moves.len() > 4);
}

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig { mode: Mode::Top2Ego, resolution: 32, train_size: 12, test_size: 4, seed }
}

#[test]
fn dataset_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::generate(&small_config(3)).unwrap();
    data.write(dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.manifest.records.len(), 16);
    let train: Vec<u64> = back.train.iter().map(|p| p.seed).collect();
    assert!(back.test.iter().all(|p| !train.contains(&p.seed)));
}

#[test]
fn missing_file_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::generate(&small_config(3)).unwrap();
    data.write(dir.path()).unwrap();
    let victim = &data.manifest.records[13].ego_seg;
    fs::remove_file(dir.path().join(victim)).unwrap();
    match read_dataset(dir.path()) {
        Err(Error::MissingFile { path, record }) => {
            assert_eq!(record, 13);
            assert!(path.ends_with(victim));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn corrupt_image_and_wrong_resolution_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::generate(&small_config(3)).unwrap();
    data.write(dir.path()).unwrap();
    let first = dir.path().join(&data.manifest.records[0].exo);
    fs::write(&first, b"not a png").unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(Error::Image { .. })));

    let mut manifest = data.manifest.clone();
    manifest.resolution = 16;
    data.write(dir.path()).unwrap();
    fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();
    let err = read_dataset(dir.path()).unwrap_err().to_string();
    assert!(err.contains("record 0"), "{err}");
}

#[test]
fn same_seed_range_gives_byte_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Dataset::generate(&small_config(8)).unwrap().write(a.path()).unwrap();
    Dataset::generate(&small_config(8)).unwrap().write(b.path()).unwrap();
    let manifest = read_manifest(a.path()).unwrap();
    let mut names = vec![MANIFEST_FILE.to_string()];
    for r in &manifest.records {
        names.extend([r.exo.clone(), r.ego.clone(), r.exo_seg.clone(), r.ego_seg.clone()]);
    }
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_json_has_the_documented_fields() {
    let data = Dataset::generate(&small_config(0)).unwrap();
    let v = serde_json::to_value(&data.manifest).unwrap();
    assert_eq!(v["mode"], "top2ego");
    assert_eq!(v["resolution"], 32);
    assert_eq!(v["num_classes"], 8);
    let r = &v["records"][0];
    for key in ["exo", "ego", "exo_seg", "ego_seg", "class_id", "seed"] {
        assert!(r.get(key).is_some(), "{key}");
    }
}
