use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::step::{Batch, TrainState};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::nets::Gen;
use crate::synthdata::{augment, Dataset, ViewPair};
use crate::tensor::Element;

pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_CHECKPOINT: &str = "final.pgan";
pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_LOG_HEADER: [&str; 9] = ["step", "gan1", "gan2", "d1", "d2", "cross_cycle", "reconstruction", "contextual", "total"];

const SHUFFLE_SALT: u64 = 0x0053_4855_4646_4c45;
const AUGMENT_SALT: u64 = 0x0041_5547_4d45_4e54;
const EVAL_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: u64,
    /// Component means over the epoch's steps.
    pub mean: LossReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub epochs_completed: usize,
    pub steps_per_epoch: usize,
    /// `mean|ego − G₁(exo)|` over the un-augmented train split.
    pub final_reconstruction_l1: f64,
    pub last: Option<LossReport>,
}

pub struct TrainOutcome<T: Element> {
    pub state: TrainState<T>,
    pub log: Vec<LossReport>,
    pub summary: TrainSummary,
}

pub fn steps_per_epoch(train_size: usize, batch_size: usize) -> usize {
    train_size.div_ceil(batch_size)
}

fn mean_report(reports: &[LossReport], config: &TrainConfig) -> LossReport {
    let n = reports.len().max(1) as f64;
    let m = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    LossReport::new(
        m(|r| r.gan1),
        m(|r| r.gan2),
        m(|r| r.d1),
        m(|r| r.d2),
        m(|r| r.cross_cycle),
        m(|r| r.reconstruction),
        m(|r| r.contextual),
        &config.weights,
    )
}

/// `mean|ego − G₁(exo)|` over `pairs`, pooled over every pixel.
pub fn reconstruction_l1<T: Element>(state: &TrainState<T>, pairs: &[ViewPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no pairs to evaluate".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in pairs.chunks(EVAL_BATCH) {
        let batch = Batch::<T>::from_pairs(chunk, state.config.seg_conditioning)?;
        let fake = state.generate(Gen::G1, &batch)?;
        sum += fake.data().iter().zip(batch.ego.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>();
        count += fake.len();
    }
    Ok(sum / count as f64)
}

/// Fails with a config error when the dataset cannot feed these networks.
pub fn check_dataset(dataset: &Dataset, config: &TrainConfig) -> Result<()> {
    let res = dataset.manifest.resolution as usize;
    config.net.check_side(res).map_err(|e| Error::Config(format!("dataset resolution {res}: {e}")))?;
    if dataset.train.is_empty() {
        return Err(Error::Dataset("train split is empty".into()));
    }
    Ok(())
}

fn log_row(step: u64, r: &LossReport) -> Vec<String> {
    let mut row = vec![step.to_string()];
    row.extend(r.components().iter().filter(|(k, _)| *k != "total").map(|(_, v)| v.to_string()));
    row.push(r.total.to_string());
    row
}

/// Runs the configured epochs (or `max_steps`) over the train split. When
/// `out_dir` is given, writes the loss log, checkpoints, effective config
/// and summary there.
pub fn train<T: Element>(
    dataset: &Dataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<TrainOutcome<T>> {
    let config = config.effective()?;
    check_dataset(dataset, &config)?;
    let mut state = TrainState::<T>::new(&config)?;
    state.gens.assert_shared()?;
    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let cfg_path = dir.join(CONFIG_FILE);
            fs::write(&cfg_path, serde_json::to_string_pretty(&config)?).map_err(|e| Error::io(&cfg_path, e))?;
            let mut w = csv::Writer::from_path(dir.join(LOSS_LOG_FILE))?;
            w.write_record(LOSS_LOG_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(config.seed ^ AUGMENT_SALT);
    let per_epoch = steps_per_epoch(dataset.train.len(), config.batch_size);
    let mut log = Vec::new();
    let mut epochs_completed = 0;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let start = log.len();
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| log.len() >= m) {
                break 'epochs;
            }
            let pairs: Vec<ViewPair> = chunk.iter().map(|&i| augment(&dataset.train[i], &config.augment, &mut augment_rng)).collect();
            let batch = Batch::from_pairs(&pairs, config.seg_conditioning)?;
            let report = state.train_step(&batch)?;
            if let Some(w) = writer.as_mut() {
                w.write_record(log_row(state.step, &report))?;
            }
            log.push(report);
            if let Some(dir) = out_dir {
                if config.checkpoint_every > 0 && state.step % config.checkpoint_every as u64 == 0 {
                    save_checkpoint(&state, &dir.join(format!("step_{:06}.pgan", state.step)))?;
                }
            }
        }
        state.gens.assert_shared()?;
        epochs_completed = epoch + 1;
        on_epoch(&EpochSummary { epoch: epoch + 1, steps: state.step, mean: mean_report(&log[start..], &config) });
    }
    state.gens.assert_shared()?;
    let summary = TrainSummary {
        steps: state.step,
        epochs_completed,
        steps_per_epoch: per_epoch,
        final_reconstruction_l1: reconstruction_l1(&state, &dataset.train)?,
        last: log.last().copied(),
    };
    if let Some(dir) = out_dir {
        if let Some(mut w) = writer {
            w.flush().map_err(|e| Error::io(dir.join(LOSS_LOG_FILE), e))?;
        }
        save_checkpoint(&state, &dir.join(FINAL_CHECKPOINT))?;
        let path = dir.join(SUMMARY_FILE);
        fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome { state, log, summary })
}

/// Mean of `values[a..b]`.
fn window_mean(values: &[f64], a: usize, b: usize) -> f64 {
    values[a..b].iter().sum::<f64>() / (b - a) as f64
}

/// `(first-window mean, last-window mean)` of the total loss.
pub fn loss_windows(log: &[LossReport], window: usize) -> Option<(f64, f64)> {
    if window == 0 || log.len() < window {
        return None;
    }
    let totals: Vec<f64> = log.iter().map(|r| r.total).collect();
    Some((window_mean(&totals, 0, window), window_mean(&totals, totals.len() - window, totals.len())))
}
