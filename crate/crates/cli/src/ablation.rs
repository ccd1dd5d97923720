use std::fs;
use std::path::Path;

use pgan_core::metrics::{generate_ego, ssim, to_unit_range};
use pgan_core::synthdata::{Dataset, ViewPair};
use pgan_core::trainer::{reconstruction_l1, train, EpochSummary, TrainConfig, TrainState};
use pgan_core::{Element, Error, Result};
use serde::{Deserialize, Serialize};

/// `(name, λ₄ override, λ₆ override)`; `None` keeps the configured weight.
pub const ABLATION_VARIANTS: [(&str, Option<f64>, Option<f64>); 3] =
    [("full", None, None), ("no_cross_cycle", Some(0.0), None), ("no_contextual", None, Some(0.0))];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub lambda4: f64,
    pub lambda6: f64,
    pub seed: u64,
    pub steps: u64,
    pub final_total: f64,
    pub train_reconstruction_l1: f64,
    pub test_reconstruction_l1: f64,
    pub test_ssim_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Variant names from lowest to highest held-out reconstruction L1.
    pub ordering: Vec<String>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("ablation.json");
        fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let mut w = csv::Writer::from_path(dir.join("ablation.csv"))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("ablation.csv"), e))
    }
}

/// Mean SSIM between `G₁(exo)` and the real ego view over `pairs`.
pub fn held_out_ssim<T: Element>(state: &TrainState<T>, pairs: &[ViewPair]) -> Result<f64> {
    let generated = generate_ego(state, pairs)?;
    let mut sum = 0.0;
    for (g, pair) in generated.iter().zip(pairs) {
        sum += ssim(&to_unit_range(g), &to_unit_range(&pair.ego_tensor::<f32>()))?;
    }
    Ok(sum / generated.len().max(1) as f64)
}

/// Trains every variant from the same seed and scores each on the test split.
pub fn run_ablation(
    dataset: &Dataset,
    base: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&str, &EpochSummary),
) -> Result<AblationReport> {
    if dataset.test.is_empty() {
        return Err(Error::Dataset("ablation needs a non-empty test split".into()));
    }
    let mut rows = Vec::new();
    for (name, l4, l6) in ABLATION_VARIANTS {
        let mut cfg = base.clone();
        cfg.weights.lambda4 = l4.unwrap_or(cfg.weights.lambda4);
        cfg.weights.lambda6 = l6.unwrap_or(cfg.weights.lambda6);
        let sub = out_dir.map(|d| d.join(name));
        let outcome = train::<f32>(dataset, &cfg, sub.as_deref(), |e| on_epoch(name, e))?;
        rows.push(AblationRow {
            variant: name.to_string(),
            lambda4: cfg.weights.lambda4,
            lambda6: cfg.weights.lambda6,
            seed: cfg.seed,
            steps: outcome.summary.steps,
            final_total: outcome.summary.last.map_or(f64::NAN, |r| r.total),
            train_reconstruction_l1: outcome.summary.final_reconstruction_l1,
            test_reconstruction_l1: reconstruction_l1(&outcome.state, &dataset.test)?,
            test_ssim_mean: held_out_ssim(&outcome.state, &dataset.test)?,
        });
    }
    let mut ordering: Vec<&AblationRow> = rows.iter().collect();
    ordering.sort_by(|a, b| a.test_reconstruction_l1.total_cmp(&b.test_reconstruction_l1));
    let report = AblationReport { ordering: ordering.iter().map(|r| r.variant.clone()).collect(), rows };
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
