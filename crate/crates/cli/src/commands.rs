use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pgan_core::metrics::{classifier_accuracy, evaluate, train_scene_classifier, ClassifierConfig, EvalOptions, SceneClassifier};
use pgan_core::nets::Gen;
use pgan_core::synthdata::{rgb_to_tensor, seg_to_tensor, tensor_to_rgb, Dataset, Split, SynthConfig};
use pgan_core::trainer::{check_dataset, load_checkpoint, train as run_training, EpochSummary, TrainConfig, TrainState};
use pgan_core::{Error, Tensor};
use serde::{Deserialize, Serialize};

use crate::ablation::run_ablation;
use crate::args::{AblateArgs, ClassifierArgs, EvalArgs, GenerateArgs, GridArgs, SynthArgs, TrainArgs};
use crate::grid::{render_grid, select_rows};
use crate::{echo, require_path, UsageError};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Everything a training run needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory written by `pgan synth`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    /// Options used when the run is scored.
    #[serde(default)]
    pub metrics: EvalOptions,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { dataset: None, out: default_out(), train: TrainConfig::default(), metrics: EvalOptions::default() }
    }
}

impl RunConfig {
    pub fn dataset_path(&self) -> Result<&Path, UsageError> {
        self.dataset.as_deref().ok_or_else(|| UsageError::Invalid("no dataset path: set `dataset` in the config or pass --dataset".into()))
    }
}

/// Reads `path` (or starts from defaults), applies flag overrides and
/// fills in the effective training config.
pub fn load_run_config(path: Option<&Path>, dataset: Option<PathBuf>, out: Option<PathBuf>) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            require_path("config file", p)?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<RunConfig>(&text).with_context(|| format!("invalid run config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if dataset.is_some() {
        cfg.dataset = dataset;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.train = cfg.train.effective()?;
    Ok(cfg)
}

fn read_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    require_path("dataset", dir)?;
    Dataset::read(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn read_checkpoint(path: &Path) -> anyhow::Result<TrainState<f32>> {
    require_path("checkpoint", path)?;
    load_checkpoint::<f32>(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn print_epoch(e: &EpochSummary, total_epochs: usize) {
    let parts: Vec<String> = e.mean.components().iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
    println!("epoch {}/{} step {}: {}", e.epoch, total_epochs, e.steps, parts.join(" "));
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig { mode: a.mode.into(), resolution: a.res, train_size: a.train, test_size: a.test, seed: a.seed };
    echo("effective synth config", &cfg)?;
    let dataset = Dataset::generate(&cfg)?;
    dataset.write(&a.out).with_context(|| format!("writing dataset to {}", a.out.display()))?;
    println!("wrote {} train and {} test pairs to {}", dataset.train.len(), dataset.test.len(), a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = load_run_config(a.config.as_deref(), a.dataset.clone(), a.out.clone())?;
    echo("effective run config", &cfg)?;
    let dataset = read_dataset(cfg.dataset_path()?)?;
    check_dataset(&dataset, &cfg.train)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join(RUN_CONFIG_FILE), serde_json::to_string_pretty(&cfg)?)?;
    let epochs = cfg.train.epochs;
    let outcome = run_training::<f32>(&dataset, &cfg.train, Some(&cfg.out), |e| print_epoch(e, epochs))?;
    println!(
        "finished {} steps; train reconstruction L1 {:.6}; outputs in {}",
        outcome.summary.steps,
        outcome.summary.final_reconstruction_l1,
        cfg.out.display()
    );
    Ok(())
}

/// Paths of the CSV and full-evaluation files written next to `report`.
pub fn eval_sidecars(report: &Path) -> (PathBuf, PathBuf) {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    (report.with_extension("csv"), report.with_file_name(format!("{stem}.evaluation.json")))
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let options = EvalOptions { kl_direction: a.kl_direction.into(), confident_threshold: a.confident_threshold };
    let split: Split = a.split.into();
    echo(
        "effective eval config",
        &serde_json::json!({
            "checkpoint": a.checkpoint,
            "dataset": a.dataset,
            "classifier": a.classifier,
            "out": a.out,
            "split": split,
            "options": options,
        }),
    )?;
    let state = read_checkpoint(&a.checkpoint)?;
    let dataset = read_dataset(&a.dataset)?;
    require_path("classifier", &a.classifier)?;
    let classifier = SceneClassifier::load(&a.classifier).with_context(|| format!("loading classifier {}", a.classifier.display()))?;
    let res = dataset.manifest.resolution as usize;
    if classifier.resolution() != res {
        return Err(
            Error::Config(format!("classifier resolution {} does not match dataset resolution {res}", classifier.resolution())).into()
        );
    }
    check_dataset(&dataset, &state.config)?;
    let evaluation = evaluate(&state, &classifier, dataset.split(split), &options)?;
    let (csv_path, full_path) = eval_sidecars(&a.out);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    evaluation.report.write_json(&a.out)?;
    evaluation.report.write_csv(&csv_path)?;
    fs::write(&full_path, serde_json::to_string_pretty(&evaluation)?)?;
    echo("report", &evaluation.report)?;
    println!(
        "reconstruction L1 {:.6} over {} pairs, {} confident",
        evaluation.reconstruction_l1, evaluation.report.n, evaluation.n_confident
    );
    Ok(())
}

pub fn grid(a: &GridArgs) -> anyhow::Result<()> {
    echo(
        "effective grid config",
        &serde_json::json!({"checkpoint": a.checkpoint, "dataset": a.dataset, "n": a.n, "seed": a.seed, "out": a.out}),
    )?;
    let state = read_checkpoint(&a.checkpoint)?;
    let dataset = read_dataset(&a.dataset)?;
    check_dataset(&dataset, &state.config)?;
    let rows = select_rows(dataset.test.len(), a.n, a.seed)?;
    let pairs: Vec<_> = rows.iter().map(|&i| &dataset.test[i]).collect();
    let img = render_grid(&state, &pairs)?;
    img.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("rows (test indices): {rows:?}");
    println!("wrote {}x{} grid to {}", img.width(), img.height(), a.out.display());
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    echo("effective generate config", &serde_json::json!({"checkpoint": a.checkpoint, "input": a.input, "seg": a.seg, "out": a.out}))?;
    let state = read_checkpoint(&a.checkpoint)?;
    require_path("input image", &a.input)?;
    let exo = image::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?.to_rgb8();
    let (w, h) = exo.dimensions();
    if w != h {
        return Err(UsageError::Invalid(format!("input must be square, got {w}x{h}")).into());
    }
    state.config.net.check_side(w as usize).map_err(|e| Error::Config(format!("input resolution {w}: {e}")))?;
    let mut data = rgb_to_tensor::<f32>(&exo).data().to_vec();
    let mut channels = 3;
    if state.config.seg_conditioning {
        let seg_path =
            a.seg.as_deref().ok_or_else(|| UsageError::Invalid("this checkpoint conditions on a segmentation; pass --seg".into()))?;
        require_path("segmentation image", seg_path)?;
        let seg = image::open(seg_path).with_context(|| format!("reading {}", seg_path.display()))?.to_luma8();
        if seg.dimensions() != (w, h) {
            return Err(UsageError::Invalid(format!("segmentation is {:?}, input is {w}x{h}", seg.dimensions())).into());
        }
        data.extend_from_slice(seg_to_tensor::<f32>(&seg).data());
        channels += 1;
    }
    let input = Tensor::new(vec![1, channels, h as usize, w as usize], data)?;
    let out = state.gens.generate_tensor(Gen::G1, &input)?.reshape(vec![3, h as usize, w as usize])?;
    tensor_to_rgb(&out)?.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn train_classifier(a: &ClassifierArgs) -> anyhow::Result<()> {
    let defaults = ClassifierConfig::default();
    let cfg = ClassifierConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        seed: a.seed.unwrap_or(defaults.seed),
        extra_pairs: a.extra.unwrap_or(defaults.extra_pairs),
        ..defaults
    };
    echo("effective classifier config", &cfg)?;
    let dataset = read_dataset(&a.dataset)?;
    let classifier = train_scene_classifier(&dataset, &cfg)?;
    let acc = classifier_accuracy(&classifier, &dataset.test)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    classifier.save(&a.out)?;
    println!("held-out accuracy {:.2}% on {} test pairs", acc * 100.0, dataset.test.len());
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(a.config.as_deref(), a.dataset.clone(), a.out.clone())?;
    if a.max_steps.is_some() {
        cfg.train.max_steps = a.max_steps;
    }
    echo("effective run config", &cfg)?;
    let dataset = read_dataset(cfg.dataset_path()?)?;
    let epochs = cfg.train.epochs;
    let report = run_ablation(&dataset, &cfg.train, Some(&cfg.out), |variant, e| {
        print!("[{variant}] ");
        print_epoch(e, epochs);
    })?;
    for row in &report.rows {
        println!(
            "{:<16} steps {:>5}  test L1 {:.6}  test SSIM {:.4}  final total {:.4}",
            row.variant, row.steps, row.test_reconstruction_l1, row.test_ssim_mean, row.final_total
        );
    }
    println!("ordering by held-out reconstruction L1: {}", report.ordering.join(" < "));
    Ok(())
}
