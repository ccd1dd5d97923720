//! Two U-Net generators whose first `shared_prefix` encoder layers alias a
//! single parameter set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamScope, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result, TensorError};
use crate::tensor::{Element, Tensor};

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;
const KERNEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    None,
    #[default]
    Instance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channels at level 1; level ℓ has `base_width · 2^(ℓ−1)`, capped at 8×.
    pub base_width: usize,
    /// Number of stride-2 levels.
    pub depth: usize,
    /// Encoder layers tied across the two generators.
    pub shared_prefix: usize,
    pub norm: Norm,
    /// Extra input channels (1 when segmentation conditioning is on).
    pub conditioning_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 3,
            out_channels: 3,
            base_width: 16,
            depth: 4,
            shared_prefix: 3,
            norm: Norm::Instance,
            conditioning_channels: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("net.depth must be at least 1".into()));
        }
        if self.shared_prefix == 0 || self.shared_prefix > self.depth {
            return Err(Error::Config(format!("net.shared_prefix must lie in 1..={} (depth), got {}", self.depth, self.shared_prefix)));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::Config("net.in_channels, net.out_channels and net.base_width must be positive".into()));
        }
        Ok(())
    }

    /// Image sides must be divisible by `2^depth`.
    pub fn check_side(&self, side: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if side == 0 || !side.is_multiple_of(m) {
            return Err(Error::Config(format!("image side {side} is not divisible by 2^depth = {m} (net.depth = {})", self.depth)));
        }
        Ok(())
    }

    /// Channel width of encoder level `level` (1-based).
    pub fn width(&self, level: usize) -> usize {
        self.base_width << (level - 1).min(3)
    }

    pub fn input_channels(&self) -> usize {
        self.in_channels + self.conditioning_channels
    }
}

/// Selects generator 1 (EN₁/DE₁: exo → ego) or generator 2 (EN₂/DE₂: ego → exo).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gen {
    G1,
    G2,
}

impl Gen {
    fn index(self) -> usize {
        match self {
            Gen::G1 => 0,
            Gen::G2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Encoder output: per-level activations, shallowest first. The last skip
/// is the bottleneck.
#[derive(Debug, Clone)]
pub struct EncodeResult<'t, T: Element> {
    pub latent: Var<'t, T>,
    pub skips: Vec<Var<'t, T>>,
}

/// Encoder/decoder halves addressable independently, as needed by the
/// cross compositions DE₂∘EN₁ and DE₁∘EN₂.
pub trait CrossViewGenerators<'t, T: Element> {
    fn encode(&self, which: Gen, image: Var<'t, T>) -> Result<EncodeResult<'t, T>, TensorError>;

    fn decode(&self, which: Gen, enc: &EncodeResult<'t, T>) -> Result<Var<'t, T>, TensorError>;

    fn generate(&self, which: Gen, image: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let enc = self.encode(which, image)?;
        self.decode(which, &enc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPair<T: Element> {
    config: UNetConfig,
    params: ParamStore<T>,
    encoders: [Vec<ConvLayer>; 2],
    /// Deepest level first, in application order.
    decoders: [Vec<ConvLayer>; 2],
}

fn conv_layer<T: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    name: &str,
    weight_shape: Vec<usize>,
    bias_len: usize,
    rng: &mut R,
) -> ConvLayer {
    ConvLayer {
        weight: store.add_gaussian(format!("{name}.weight"), weight_shape, INIT_STD, rng),
        bias: store.add_zeros(format!("{name}.bias"), vec![bias_len]),
    }
}

impl<T: Element> GeneratorPair<T> {
    /// Builds both generators with the configured shared encoder prefix.
    pub fn new<R: Rng + ?Sized>(config: UNetConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, rng, true)
    }

    /// Same architecture, but every layer owns its parameters. Shared-prefix
    /// layers start as equal copies, so [`GeneratorPair::assert_shared`]
    /// rejects this pair even though the values agree.
    pub fn new_untied<R: Rng + ?Sized>(config: UNetConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, rng, false)
    }

    fn build<R: Rng + ?Sized>(config: UNetConfig, rng: &mut R, tied: bool) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut encoders: [Vec<ConvLayer>; 2] = [Vec::new(), Vec::new()];
        for level in 1..=config.depth {
            let cin = if level == 1 { config.input_channels() } else { config.width(level - 1) };
            let shape = vec![config.width(level), cin, KERNEL, KERNEL];
            if level <= config.shared_prefix {
                if tied {
                    let layer = conv_layer(&mut params, &format!("shared.enc{level}"), shape, config.width(level), rng);
                    encoders[0].push(layer);
                    encoders[1].push(layer);
                } else {
                    let a = conv_layer(&mut params, &format!("g1.enc{level}"), shape, config.width(level), rng);
                    let w = params.get(a.weight).clone();
                    let b = params.get(a.bias).clone();
                    let c = ConvLayer {
                        weight: params.add(format!("g2.enc{level}.weight"), w),
                        bias: params.add(format!("g2.enc{level}.bias"), b),
                    };
                    encoders[0].push(a);
                    encoders[1].push(c);
                }
            } else {
                for (g, enc) in encoders.iter_mut().enumerate() {
                    let name = format!("g{}.enc{level}", g + 1);
                    enc.push(conv_layer(&mut params, &name, shape.clone(), config.width(level), rng));
                }
            }
        }
        let mut decoders: [Vec<ConvLayer>; 2] = [Vec::new(), Vec::new()];
        for (g, dec) in decoders.iter_mut().enumerate() {
            for level in (1..=config.depth).rev() {
                let cin = if level == config.depth { config.width(level) } else { 2 * config.width(level) };
                let cout = if level == 1 { config.out_channels } else { config.width(level - 1) };
                let name = format!("g{}.dec{level}", g + 1);
                dec.push(conv_layer(&mut params, &name, vec![cin, cout, KERNEL, KERNEL], cout, rng));
            }
        }
        Ok(GeneratorPair { config, params, encoders, decoders })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Encoder layer `level` (1-based) of generator `which`.
    pub fn encoder_layer(&self, which: Gen, level: usize) -> ConvLayer {
        self.encoders[which.index()][level - 1]
    }

    /// Decoder layer at `level` (1-based, the head is level 1).
    pub fn decoder_layer(&self, which: Gen, level: usize) -> ConvLayer {
        self.decoders[which.index()][self.config.depth - level]
    }

    /// Fails unless every shared-prefix encoder layer of the two generators
    /// refers to one parameter storage.
    pub fn assert_shared(&self) -> Result<()> {
        for level in 1..=self.config.shared_prefix {
            if self.encoder_layer(Gen::G1, level) != self.encoder_layer(Gen::G2, level) {
                return Err(Error::SharingViolation { layer: level });
            }
        }
        Ok(())
    }

    pub fn bind<'a, 't>(&'a self, tape: &'t Tape<T>, trainable: bool) -> BoundGenerators<'a, 't, T> {
        BoundGenerators { pair: self, scope: ParamScope::new(&self.params, tape, trainable) }
    }

    /// Inference on a plain tensor; no gradient bookkeeping.
    pub fn generate_tensor(&self, which: Gen, image: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let out = bound.generate(which, tape.constant(image.clone()))?;
        Ok(out.to_tensor())
    }
}

/// A [`GeneratorPair`] bound to one tape.
pub struct BoundGenerators<'a, 't, T: Element> {
    pair: &'a GeneratorPair<T>,
    scope: ParamScope<'a, 't, T>,
}

impl<'a, 't, T: Element> BoundGenerators<'a, 't, T> {
    pub fn scope(&self) -> &ParamScope<'a, 't, T> {
        &self.scope
    }

    pub fn grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.scope.grads()
    }

    fn conv(&self, x: Var<'t, T>, layer: ConvLayer) -> Result<Var<'t, T>, TensorError> {
        x.conv2d(self.scope.var(layer.weight), self.scope.var(layer.bias), 2, 1)
    }

    fn deconv(&self, x: Var<'t, T>, layer: ConvLayer) -> Result<Var<'t, T>, TensorError> {
        x.conv_transpose2d(self.scope.var(layer.weight), self.scope.var(layer.bias), 2, 1)
    }
}

impl<'t, T: Element> CrossViewGenerators<'t, T> for BoundGenerators<'_, 't, T> {
    fn encode(&self, which: Gen, image: Var<'t, T>) -> Result<EncodeResult<'t, T>, TensorError> {
        let cfg = &self.pair.config;
        let (_, c, h, w) = image.value().dims4()?;
        if c != cfg.input_channels() {
            return Err(TensorError::Invalid(format!(
                "encode: input has {c} channels, generator expects {} ({} image + {} conditioning)",
                cfg.input_channels(),
                cfg.in_channels,
                cfg.conditioning_channels
            )));
        }
        let m = 1usize << cfg.depth;
        if h % m != 0 || w % m != 0 {
            return Err(TensorError::Invalid(format!("encode: spatial size {h}x{w} is not divisible by 2^depth = {m}")));
        }
        let mut x = image;
        let mut skips = Vec::with_capacity(cfg.depth);
        for (k, &layer) in self.pair.encoders[which.index()].iter().enumerate() {
            x = self.conv(x, layer)?;
            if cfg.norm == Norm::Instance && k > 0 && k + 1 < cfg.depth {
                x = x.instance_norm()?;
            }
            x = x.leaky_relu(LEAKY_SLOPE)?;
            skips.push(x);
        }
        Ok(EncodeResult { latent: x, skips })
    }

    fn decode(&self, which: Gen, enc: &EncodeResult<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let cfg = &self.pair.config;
        if enc.skips.len() != cfg.depth {
            return Err(TensorError::Invalid(format!("decode: encoding has {} levels, decoder expects {}", enc.skips.len(), cfg.depth)));
        }
        for (k, skip) in enc.skips.iter().enumerate() {
            let c = skip.value().dims4()?.1;
            if c != cfg.width(k + 1) {
                return Err(TensorError::Invalid(format!(
                    "decode: level {} has {c} channels, decoder expects {}",
                    k + 1,
                    cfg.width(k + 1)
                )));
            }
        }
        let mut x = enc.latent;
        for (i, &layer) in self.pair.decoders[which.index()].iter().enumerate() {
            let level = cfg.depth - i;
            if level < cfg.depth {
                x = x.concat_channels(enc.skips[level - 1])?;
            }
            x = self.deconv(x, layer)?;
            if level > 1 {
                if cfg.norm == Norm::Instance {
                    x = x.instance_norm()?;
                }
                x = x.relu()?;
            } else {
                x = x.tanh()?;
            }
        }
        Ok(x)
    }
}
