use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::SceneClassifier;
use super::image::{psnr, sharpness_difference, ssim, to_unit_range};
use super::scores::{kl_score, topk_agreement, KlDirection, CONFIDENT_THRESHOLD};
use crate::error::{Error, Result};
use crate::nets::Gen;
use crate::synthdata::ViewPair;
use crate::tensor::{Element, Tensor};
use crate::trainer::{Batch, TrainState};

const EVAL_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ssim_mean: f64,
    pub psnr_mean: f64,
    pub sd_mean: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub top1_all: f64,
    pub top1_confident: f64,
    pub top5_all: f64,
    pub top5_confident: f64,
    pub n: usize,
}

/// A [`MetricsReport`] plus diagnostics that are not table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Pairs whose real-image top-1 probability exceeds the threshold.
    pub n_confident: usize,
    /// `mean|ego − G₁(exo)|` over the evaluated pairs on the `[-1, 1]` scale.
    pub reconstruction_l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub kl_direction: KlDirection,
    pub confident_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { kl_direction: KlDirection::GeneratedToReal, confident_threshold: CONFIDENT_THRESHOLD }
    }
}

/// Image metrics averaged over pairs, where `generated[i]` and `real[i]`
/// are `[3, H, W]` tensors in `[-1, 1]`.
pub fn score_images(
    generated: &[Tensor<f32>],
    real: &[Tensor<f32>],
    classifier: &SceneClassifier,
    options: &EvalOptions,
) -> Result<Evaluation> {
    if generated.len() != real.len() || generated.is_empty() {
        return Err(Error::Config(format!("evaluation needs equal, non-empty sets ({} vs {})", generated.len(), real.len())));
    }
    let n = generated.len();
    let (mut s, mut p, mut d, mut l1, mut count) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for (g, r) in generated.iter().zip(real) {
        let (gu, ru) = (to_unit_range(g), to_unit_range(r));
        s += ssim(&gu, &ru)?;
        p += psnr(&gu, &ru)?;
        d += sharpness_difference(&gu, &ru)?;
        l1 += g.data().iter().zip(r.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>();
        count += g.len();
    }
    let pg = classifier.predict_pairs(generated)?;
    let pr = classifier.predict_pairs(real)?;
    let (kl_mean, kl_std) = kl_score(&pg, &pr, options.kl_direction)?;
    let top1 = topk_agreement(&pg, &pr, 1, options.confident_threshold)?;
    let top5 = topk_agreement(&pg, &pr, 5.min(classifier.num_classes() - 1), options.confident_threshold)?;
    let report = MetricsReport {
        ssim_mean: s / n as f64,
        psnr_mean: p / n as f64,
        sd_mean: d / n as f64,
        kl_mean,
        kl_std,
        top1_all: top1.all,
        top1_confident: top1.confident,
        top5_all: top5.all,
        top5_confident: top5.confident,
        n,
    };
    Ok(Evaluation { report, n_confident: top1.n_confident, reconstruction_l1: l1 / count as f64 })
}

/// `G₁(exo)` for each pair, as `[3, H, W]` tensors.
pub fn generate_ego<T: Element>(state: &TrainState<T>, pairs: &[ViewPair]) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(EVAL_BATCH) {
        let batch = Batch::<T>::from_pairs(chunk, state.config.seg_conditioning)?;
        let fake = state.generate(Gen::G1, &batch)?;
        for b in 0..chunk.len() {
            let item = fake.batch_item(b)?;
            let shape = item.shape()[1..].to_vec();
            out.push(item.cast::<f32>().reshape(shape)?);
        }
    }
    Ok(out)
}

/// Evaluates `G₁` on `pairs` against their real ego views.
pub fn evaluate<T: Element>(
    state: &TrainState<T>,
    classifier: &SceneClassifier,
    pairs: &[ViewPair],
    options: &EvalOptions,
) -> Result<Evaluation> {
    let generated = generate_ego(state, pairs)?;
    let real: Vec<Tensor<f32>> = pairs.iter().map(|p| p.ego_tensor()).collect();
    score_images(&generated, &real, classifier, options)
}

impl MetricsReport {
    /// JSON/CSV column names, in serialization order.
    pub const FIELDS: [&'static str; 10] =
        ["ssim_mean", "psnr_mean", "sd_mean", "kl_mean", "kl_std", "top1_all", "top1_confident", "top5_all", "top5_confident", "n"];

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.serialize(self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}
