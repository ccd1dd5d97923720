//! Distribution-level agreement between classifier outputs on generated and
//! real images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-8;
pub const CONFIDENT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(p_g ‖ p_r)`.
    #[default]
    GeneratedToReal,
    /// `KL(p_r ‖ p_g)`.
    RealToGenerated,
}

/// Floors every entry at [`PROB_FLOOR`] and renormalizes.
pub fn floor_and_normalize(p: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = p.iter().map(|&v| v.max(PROB_FLOOR)).collect();
    let s: f64 = q.iter().sum();
    q.into_iter().map(|v| v / s).collect()
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let p = floor_and_normalize(p);
    let q = floor_and_normalize(q);
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// Mean and population standard deviation of the per-pair divergence.
pub fn kl_score(generated: &[Vec<f64>], real: &[Vec<f64>], direction: KlDirection) -> Result<(f64, f64)> {
    if generated.len() != real.len() {
        return Err(Error::Config(format!("kl_score: {} generated vs {} real", generated.len(), real.len())));
    }
    if generated.is_empty() {
        return Ok((0.0, 0.0));
    }
    let kls: Vec<f64> = generated
        .iter()
        .zip(real)
        .map(|(g, r)| match direction {
            KlDirection::GeneratedToReal => kl_divergence(g, r),
            KlDirection::RealToGenerated => kl_divergence(r, g),
        })
        .collect();
    let n = kls.len() as f64;
    let mean = kls.iter().sum::<f64>() / n;
    let var = kls.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Class indices by descending probability; ties keep the lower index first.
pub fn ranked(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    /// Percentage over all pairs.
    pub all: f64,
    /// Percentage over pairs whose real top-1 probability exceeds the threshold.
    pub confident: f64,
    pub n: usize,
    pub n_confident: usize,
}

/// Percentage of pairs whose real top-1 class is among the generated top-k.
pub fn topk_agreement(generated: &[Vec<f64>], real: &[Vec<f64>], k: usize, threshold: f64) -> Result<TopK> {
    if generated.len() != real.len() {
        return Err(Error::Config(format!("topk: {} generated vs {} real", generated.len(), real.len())));
    }
    let classes = real.first().map_or(0, |p| p.len());
    if k == 0 || k >= classes.max(1) {
        return Err(Error::Config(format!("topk: k = {k} must lie in 1..{classes}")));
    }
    let (mut hits, mut conf, mut conf_hits) = (0usize, 0usize, 0usize);
    for (g, r) in generated.iter().zip(real) {
        let target = ranked(r)[0];
        let hit = ranked(g)[..k].contains(&target);
        hits += hit as usize;
        if r[target] > threshold {
            conf += 1;
            conf_hits += hit as usize;
        }
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    Ok(TopK { all: pct(hits, generated.len()), confident: pct(conf_hits, conf), n: generated.len(), n_confident: conf })
}
