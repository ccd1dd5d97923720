//! Small convolutional scene classifier used by the KL and top-k scores.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Tape, Var};
use crate::error::{Error, Result, TensorError};
use crate::nets::{ParamId, ParamScope, ParamStore};
use crate::synthdata::{rgb_to_tensor, Dataset, ViewPair, NUM_CLASSES};
use crate::tensor::{Element, Tensor};
use crate::trainer::{adam_step, decode_records, encode_records, AdamHyper, AdamState, Record};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub widths: [usize; 2],
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub flip: bool,
    /// Extra labeled pairs rendered from a reserved seed range, in the
    /// dataset's mode and resolution, added to its train split.
    pub extra_pairs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            widths: [16, 32],
            num_classes: NUM_CLASSES,
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            flip: true,
            extra_pairs: 1536,
        }
    }
}

/// Two conv 3×3 + relu + 2×2 average-pool stages and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneClassifier {
    config: ClassifierConfig,
    resolution: usize,
    params: ParamStore<f32>,
    convs: [(ParamId, ParamId); 2],
    head: (ParamId, ParamId),
}

impl SceneClassifier {
    pub fn new(config: ClassifierConfig, resolution: usize) -> Result<Self> {
        if !resolution.is_multiple_of(4) || resolution == 0 {
            return Err(Error::Config(format!("classifier resolution {resolution} must be a positive multiple of 4")));
        }
        if config.num_classes < 2 || config.widths.contains(&0) {
            return Err(Error::Config("classifier needs at least two classes and positive widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let mut cin = 3;
        let mut convs = Vec::new();
        for (i, &cout) in config.widths.iter().enumerate() {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            convs.push((
                params.add_gaussian(format!("conv{}.weight", i + 1), vec![cout, cin, 3, 3], std, &mut rng),
                params.add_zeros(format!("conv{}.bias", i + 1), vec![cout]),
            ));
            cin = cout;
        }
        let features = cin * (resolution / 4) * (resolution / 4);
        let head = (
            params.add_gaussian("head.weight", vec![config.num_classes, features], (1.0 / features as f64).sqrt(), &mut rng),
            params.add_zeros("head.bias", vec![config.num_classes]),
        );
        Ok(SceneClassifier { config, resolution, params, convs: [convs[0], convs[1]], head })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn logits<'t>(&self, scope: &ParamScope<'_, 't, f32>, images: Var<'t, f32>) -> Result<Var<'t, f32>, TensorError> {
        let mut x = images;
        for &(w, b) in &self.convs {
            x = x.conv2d(scope.var(w), scope.var(b), 1, 1)?.relu()?.avg_pool2d(2)?;
        }
        let n = x.shape()[0];
        let features = x.value().len() / n;
        x.reshape(vec![n, features])?.linear(scope.var(self.head.0), scope.var(self.head.1))
    }

    /// Class probabilities for `[B, 3, H, W]` images in `[-1, 1]`.
    pub fn predict<T: Element>(&self, images: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let (_, c, h, w) = images.dims4()?;
        if c != 3 || h != self.resolution || w != self.resolution {
            return Err(Error::Config(format!(
                "classifier expects [B, 3, {r}, {r}] images, got {:?}",
                images.shape(),
                r = self.resolution
            )));
        }
        let tape = Tape::new();
        let scope = ParamScope::new(&self.params, &tape, false);
        let logits = self.logits(&scope, tape.constant(images.cast::<f32>()))?;
        let k = self.config.num_classes;
        let probs: Vec<f64> = softmax_rows(&logits.value().data().iter().map(|v| v.as_f64()).collect::<Vec<_>>(), k);
        Ok(probs.chunks(k).map(|p| p.to_vec()).collect())
    }

    pub fn predict_pairs(&self, images: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            out.extend(self.predict(&Tensor::stack_batch(chunk)?)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&ClassifierFile { config: self.config.clone(), resolution: self.resolution })?;
        let mut records = vec![tensor_record("meta/classifier", &Tensor::new(vec![meta.len()], meta.iter().map(|&b| b as f32).collect())?)];
        for (_, name, t) in self.params.iter() {
            records.push(tensor_record(&format!("cls/{name}"), t));
        }
        encode_records(&records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = decode_records(bytes)?;
        let meta = records
            .iter()
            .find(|r| r.name == "meta/classifier")
            .ok_or_else(|| Error::Checkpoint("not a classifier file (missing meta/classifier)".into()))?;
        let meta: Vec<u8> = record_tensor(meta)?.data().iter().map(|&b| b as u8).collect();
        let file: ClassifierFile = serde_json::from_slice(&meta)?;
        let mut cls = SceneClassifier::new(file.config, file.resolution)?;
        let mut loaded = 0;
        for r in records.iter().filter(|r| r.name != "meta/classifier") {
            let id = r
                .name
                .strip_prefix("cls/")
                .and_then(|n| cls.params.find(n))
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {}", r.name)))?;
            cls.params.set(id, record_tensor(r)?).map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", r.name)))?;
            loaded += 1;
        }
        if loaded != cls.params.len() {
            return Err(Error::Checkpoint(format!("classifier file has {loaded} of {} tensors", cls.params.len())));
        }
        Ok(cls)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierFile {
    config: ClassifierConfig,
    resolution: usize,
}

fn tensor_record(name: &str, t: &Tensor<f32>) -> Record {
    let mut data = Vec::with_capacity(t.len() * 4);
    for &v in t.data() {
        v.write_le(&mut data);
    }
    Record { name: name.into(), dtype: f32::DTYPE, shape: t.shape().to_vec(), data }
}

fn record_tensor(r: &Record) -> Result<Tensor<f32>> {
    if r.dtype != f32::DTYPE {
        return Err(Error::Checkpoint(format!("tensor {} must be f32", r.name)));
    }
    Ok(Tensor::new(r.shape.clone(), r.data.chunks_exact(4).map(f32::read_le).collect())?)
}

fn flip_image(t: &Tensor<f32>) -> Tensor<f32> {
    let w = t.shape()[2];
    Tensor::from_fn(t.shape().to_vec(), |i| {
        let x = i % w;
        t.data()[i - x + (w - 1 - x)]
    })
}

/// First seed of the range reserved for classifier-only pairs.
pub const CLASSIFIER_SEED_OFFSET: u64 = 1 << 41;

/// Trains on the ego views of the dataset's train split plus
/// `config.extra_pairs` freshly rendered pairs.
pub fn train_scene_classifier(dataset: &Dataset, config: &ClassifierConfig) -> Result<SceneClassifier> {
    let m = &dataset.manifest;
    let mut pairs = dataset.train.clone();
    for i in 0..config.extra_pairs as u64 {
        let seed = m.base_seed.wrapping_add(CLASSIFIER_SEED_OFFSET).wrapping_add(i);
        pairs.push(ViewPair::render(seed, m.mode, m.resolution));
    }
    train_on_pairs(&pairs, config)
}

/// Trains on the ego views of `pairs` with their scene labels.
pub fn train_on_pairs(pairs: &[ViewPair], config: &ClassifierConfig) -> Result<SceneClassifier> {
    let first = pairs.first().ok_or_else(|| Error::Dataset("classifier training needs labeled pairs".into()))?;
    let mut cls = SceneClassifier::new(config.clone(), first.resolution() as usize)?;
    if let Some(p) = pairs.iter().find(|p| p.class_id >= config.num_classes) {
        return Err(Error::Dataset(format!("pair with seed {} has label {} >= {}", p.seed, p.class_id, config.num_classes)));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("classifier epochs and batch_size must be positive".into()));
    }
    let images: Vec<Tensor<f32>> = pairs.iter().map(|p| rgb_to_tensor(&p.ego)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xC1A5_5000);
    let mut opt = AdamState::new(&cls.params);
    let hyper = AdamHyper { lr: config.learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Tensor<f32>> = chunk
                .iter()
                .map(|&i| if config.flip && rng.random_bool(0.5) { flip_image(&images[i]) } else { images[i].clone() })
                .collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| pairs[i].class_id).collect();
            let tape = Tape::new();
            let grads = {
                let scope = ParamScope::new(&cls.params, &tape, true);
                let loss = cls.logits(&scope, tape.constant(Tensor::stack_batch(&batch)?))?.softmax_cross_entropy(&labels)?;
                tape.backward(loss)?;
                scope.grads()
            };
            adam_step(&mut cls.params, &grads, &mut opt, &hyper)?;
        }
    }
    Ok(cls)
}

/// Top-1 accuracy (fraction) of the classifier on the ego views of `pairs`.
pub fn classifier_accuracy(cls: &SceneClassifier, pairs: &[ViewPair]) -> Result<f64> {
    let images: Vec<Tensor<f32>> = pairs.iter().map(|p| rgb_to_tensor(&p.ego)).collect();
    let probs = cls.predict_pairs(&images)?;
    let hits = probs.iter().zip(pairs).filter(|(p, pair)| super::ranked(p)[0] == pair.class_id).count();
    Ok(hits as f64 / pairs.len().max(1) as f64)
}
