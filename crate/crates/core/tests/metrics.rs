use pgan_core::metrics::*;
use pgan_core::synthdata::{Dataset, SynthConfig};
use pgan_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct per-window SSIM: every window mean, variance and covariance is
/// summed from scratch.
fn naive_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 8;
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0.0;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let mut pa = Vec::new();
            let mut pb = Vec::new();
            for y in y0..y0 + k {
                for x in x0..x0 + k {
                    pa.push(a[y * w + x]);
                    pb.push(b[y * w + x]);
                }
            }
            let n = pa.len() as f64;
            let ma = pa.iter().sum::<f64>() / n;
            let mb = pb.iter().sum::<f64>() / n;
            let va = pa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
            let vb = pb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
            let cov = pa.iter().zip(&pb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    total / count
}

fn unit(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::rand_uniform(shape, 0.0, 1.0, rng)
}

#[test]
fn ssim_matches_windowed_oracle() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (8 + seed as usize % 3, 8 + seed as usize % 2);
        let a = unit(vec![h, w], &mut rng);
        let b = unit(vec![h, w], &mut rng);
        let got = ssim(&a, &b).unwrap();
        assert!((got - naive_ssim(a.data(), b.data(), h, w)).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn ssim_of_binary_image_and_its_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Tensor::<f64>::from_fn(vec![8, 8], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let inv = a.map(|v| 1.0 - v);
    let got = ssim(&a, &inv).unwrap();
    assert!((got - naive_ssim(a.data(), inv.data(), 8, 8)).abs() < 1e-6);
    assert!(got < 0.0);
}

#[test]
fn ssim_identity_and_channel_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = unit(vec![3, 9, 9], &mut rng);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    let b = unit(vec![3, 9, 9], &mut rng);
    let per: f64 = (0..3).map(|c| naive_ssim(&a.data()[c * 81..(c + 1) * 81], &b.data()[c * 81..(c + 1) * 81], 9, 9)).sum::<f64>() / 3.0;
    assert!((ssim(&a, &b).unwrap() - per).abs() < 1e-6);
    assert!(ssim(&a, &Tensor::zeros(vec![3, 9, 8])).is_err());
}

#[test]
fn psnr_is_strictly_decreasing_in_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows: Vec<(f64, f64)> = (0..50)
        .map(|_| {
            let a = unit(vec![3, 8, 8], &mut rng);
            let spread = rng.random_range(0.01..0.5);
            let noise = Tensor::<f64>::rand_uniform(vec![3, 8, 8], -0.5, 0.5, &mut rng);
            let b = a.zip_map(&noise, |v, n| (v + spread * n).clamp(0.0, 1.0));
            (mse(&a, &b).unwrap(), psnr(&a, &b).unwrap())
        })
        .collect();
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    for pair in rows.windows(2) {
        if pair[1].0 > pair[0].0 {
            assert!(pair[1].1 < pair[0].1);
        }
    }
    for (m, p) in rows {
        assert!((p - 10.0 * (1.0 / m).log10()).abs() < 1e-9);
    }
}

#[test]
fn sharpness_difference_on_checkerboard() {
    for c in [0.1, 0.25, 0.6] {
        let flat = Tensor::<f64>::full(vec![4, 4], 0.5);
        let board = Tensor::<f64>::from_fn(vec![4, 4], |i| if (i / 4 + i % 4) % 2 == 0 { 0.5 + c / 2.0 } else { 0.5 - c / 2.0 });
        // Each of the 12 horizontal and 12 vertical forward differences is c.
        let expected = 10.0 * (1.0 / (24.0 * c / 16.0)).log10();
        assert!((sharpness_difference(&flat, &board).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn sharpness_difference_caps_and_ignores_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = Tensor::<f64>::rand_uniform(vec![3, 6, 6], 0.0, 0.8, &mut rng);
    let b = Tensor::<f64>::rand_uniform(vec![3, 6, 6], 0.0, 0.8, &mut rng);
    assert_eq!(sharpness_difference(&a, &a).unwrap(), DB_CAP);
    let shift = |t: &Tensor<f64>| t.map(|v| v + 0.2);
    let d0 = sharpness_difference(&a, &b).unwrap();
    assert!((d0 - sharpness_difference(&shift(&a), &shift(&b)).unwrap()).abs() < 1e-9);
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[test]
fn kl_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gen: Vec<Vec<f64>> = (0..20).map(|_| random_distribution(&mut rng, 8)).collect();
    let real: Vec<Vec<f64>> = (0..20).map(|_| random_distribution(&mut rng, 8)).collect();
    let mut kls = Vec::new();
    for (g, r) in gen.iter().zip(&real) {
        let gf: Vec<f64> = g.iter().map(|v| v.max(1e-8)).collect();
        let rf: Vec<f64> = r.iter().map(|v| v.max(1e-8)).collect();
        let (sg, sr): (f64, f64) = (gf.iter().sum(), rf.iter().sum());
        let mut kl = 0.0;
        for c in 0..8 {
            let p = gf[c] / sg;
            let q = rf[c] / sr;
            kl += p * (p / q).ln();
        }
        kls.push(kl);
    }
    let mean = kls.iter().sum::<f64>() / 20.0;
    let std = (kls.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / 20.0).sqrt();
    let (m, s) = kl_score(&gen, &real, KlDirection::GeneratedToReal).unwrap();
    assert!((m - mean).abs() < 1e-9 && (s - std).abs() < 1e-9);
    let (rm, _) = kl_score(&real, &gen, KlDirection::RealToGenerated).unwrap();
    assert!((rm - mean).abs() < 1e-9);
    assert!(kl_score(&gen[..3], &real, KlDirection::default()).is_err());
}

#[test]
fn kl_single_support_case() {
    let (m, s) = kl_score(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]], KlDirection::default()).unwrap();
    assert!((m - 2f64.ln()).abs() < 1e-6);
    assert_eq!(s, 0.0);
}

/// Generated distributions put 0.7 on one class and 0.1 on the other three.
#[test]
fn topk_enumeration_on_four_classes() {
    let peaked = |c: usize| (0..4).map(|i| if i == c { 0.7 } else { 0.1 }).collect::<Vec<f64>>();
    let mut gen = Vec::new();
    let mut real = Vec::new();
    let mut hits = 0;
    let mut conf = 0;
    let mut conf_hits = 0;
    for g in 0..4 {
        for r in 0..4 {
            for strength in [0.4, 0.9] {
                gen.push(peaked(g));
                let mut p = vec![(1.0 - strength) / 3.0; 4];
                p[r] = strength;
                real.push(p);
                // Ties among the 0.1 classes resolve to the lowest indices.
                let others: Vec<usize> = (0..4).filter(|&i| i != g).collect();
                let hit = r == g || others[..2].contains(&r);
                hits += hit as usize;
                if strength > 0.5 {
                    conf += 1;
                    conf_hits += hit as usize;
                }
            }
        }
    }
    let t = topk_agreement(&gen, &real, 3, 0.5).unwrap();
    assert_eq!(t.n, 32);
    assert_eq!(t.n_confident, conf);
    assert!((t.all - 100.0 * hits as f64 / 32.0).abs() < 1e-9);
    assert!((t.confident - 100.0 * conf_hits as f64 / conf as f64).abs() < 1e-9);
    let t1 = topk_agreement(&gen, &real, 1, 0.5).unwrap();
    assert!((t1.all - 100.0 * 8.0 / 32.0).abs() < 1e-9);
}

#[test]
fn topk_identity_and_degenerate_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p: Vec<Vec<f64>> = (0..10).map(|_| random_distribution(&mut rng, 8)).collect();
    for k in 1..8 {
        let t = topk_agreement(&p, &p, k, 0.0).unwrap();
        assert_eq!((t.all, t.confident), (100.0, 100.0));
    }
    let flat = vec![vec![0.25; 4]; 3];
    let t = topk_agreement(&flat, &flat, 1, 0.5).unwrap();
    assert_eq!((t.confident, t.n_confident), (0.0, 0));
    assert!(topk_agreement(&flat, &flat, 4, 0.5).is_err());
}

proptest! {
    #[test]
    fn ssim_is_symmetric_and_bounded(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = unit(vec![2, 8, 10], &mut rng);
        let b = unit(vec![2, 8, 10], &mut rng);
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn kl_is_non_negative(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, 5);
        let q = random_distribution(&mut rng, 5);
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
        prop_assert!(kl_divergence(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn caps_are_respected(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = unit(vec![1, 4, 4], &mut rng);
        let b = unit(vec![1, 4, 4], &mut rng);
        prop_assert!(psnr(&a, &b).unwrap() <= DB_CAP);
        prop_assert!(sharpness_difference(&a, &b).unwrap() <= DB_CAP);
    }
}

fn default_dataset() -> Dataset {
    Dataset::generate(&SynthConfig::default()).unwrap()
}

#[test]
fn classifier_reaches_ninety_percent_and_is_deterministic() {
    let d = default_dataset();
    let cfg = ClassifierConfig::default();
    let cls = train_scene_classifier(&d, &cfg).unwrap();
    let acc = classifier_accuracy(&cls, &d.test).unwrap();
    assert!(acc >= 0.9, "held-out accuracy {acc}");

    let small = ClassifierConfig { epochs: 1, extra_pairs: 0, ..cfg };
    let a = train_scene_classifier(&d, &small).unwrap();
    let b = train_scene_classifier(&d, &small).unwrap();
    assert_eq!(a, b);

    let images: Vec<Tensor<f32>> = d.test.iter().map(|p| p.ego_tensor()).collect();
    let probs = cls.predict_pairs(&images).unwrap();
    assert!(probs.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-6));
    assert_eq!(probs, cls.predict_pairs(&images).unwrap());

    let restored = SceneClassifier::from_bytes(&cls.to_bytes().unwrap()).unwrap();
    assert_eq!(restored, cls);

    let eval = score_images(&images, &images, &cls, &EvalOptions::default()).unwrap();
    let r = &eval.report;
    assert_eq!((r.ssim_mean, r.psnr_mean, r.sd_mean), (1.0, DB_CAP, DB_CAP));
    assert_eq!((r.kl_mean, r.kl_std), (0.0, 0.0));
    assert_eq!((r.top1_all, r.top5_all), (100.0, 100.0));
    assert_eq!(eval.reconstruction_l1, 0.0);
}

#[test]
fn report_serializes_the_table_columns() {
    let r = MetricsReport {
        ssim_mean: 0.5,
        psnr_mean: 20.0,
        sd_mean: 18.0,
        kl_mean: 1.0,
        kl_std: 0.5,
        top1_all: 50.0,
        top1_confident: 60.0,
        top5_all: 90.0,
        top5_confident: 95.0,
        n: 10,
    };
    let json = serde_json::to_value(&r).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = MetricsReport::FIELDS.to_vec();
    expected.sort_unstable();
    let mut keys_sorted = keys.clone();
    keys_sorted.sort_unstable();
    assert_eq!(keys_sorted, expected);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    r.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), MetricsReport::FIELDS.join(","));
}
