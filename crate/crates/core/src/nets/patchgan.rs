//! Conditional PatchGAN discriminator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamScope, ParamStore};
use super::unet::{ConvLayer, Norm, INIT_STD, LEAKY_SLOPE};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result, TensorError};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchGanConfig {
    pub base_width: usize,
    pub kernel_size: usize,
    pub norm: Norm,
}

impl Default for PatchGanConfig {
    fn default() -> Self {
        PatchGanConfig { base_width: 16, kernel_size: 4, norm: Norm::Instance }
    }
}

impl PatchGanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.kernel_size < 2 {
            return Err(Error::Config("disc.base_width must be positive and disc.kernel_size at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stage {
    layer: ConvLayer,
    stride: usize,
    norm: bool,
}

/// Three conv stages (strides 2, 2, 1) and a one-channel conv head that
/// emits a grid of patch logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDiscriminator<T: Element> {
    config: PatchGanConfig,
    condition_channels: usize,
    candidate_channels: usize,
    params: ParamStore<T>,
    stages: Vec<Stage>,
    head: ConvLayer,
}

impl<T: Element> PatchDiscriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: PatchGanConfig, condition_channels: usize, candidate_channels: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let w = config.base_width;
        let mut params = ParamStore::new();
        let mut layer = |params: &mut ParamStore<T>, name: &str, cout: usize, cin: usize| ConvLayer {
            weight: params.add_gaussian(format!("{name}.weight"), vec![cout, cin, k, k], INIT_STD, rng),
            bias: params.add_zeros(format!("{name}.bias"), vec![cout]),
        };
        let plan = [(condition_channels + candidate_channels, w, 2, false), (w, 2 * w, 2, true), (2 * w, 4 * w, 1, true)];
        let mut stages = Vec::new();
        for (i, &(cin, cout, stride, norm)) in plan.iter().enumerate() {
            stages.push(Stage {
                layer: layer(&mut params, &format!("conv{}", i + 1), cout, cin),
                stride,
                norm: norm && config.norm == Norm::Instance,
            });
        }
        let head = layer(&mut params, "head", 1, 4 * w);
        Ok(PatchDiscriminator { config, condition_channels, candidate_channels, params, stages, head })
    }

    pub fn config(&self) -> &PatchGanConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Zeroes the head so every logit is 0.
    pub fn zero_head(&mut self) {
        for id in [self.head.weight, self.head.bias] {
            self.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn bind<'a, 't>(&'a self, tape: &'t Tape<T>, trainable: bool) -> BoundDiscriminator<'a, 't, T> {
        BoundDiscriminator { disc: self, scope: ParamScope::new(&self.params, tape, trainable) }
    }
}

pub struct BoundDiscriminator<'a, 't, T: Element> {
    disc: &'a PatchDiscriminator<T>,
    scope: ParamScope<'a, 't, T>,
}

impl<'a, 't, T: Element> BoundDiscriminator<'a, 't, T> {
    pub fn scope(&self) -> &ParamScope<'a, 't, T> {
        &self.scope
    }

    pub fn grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.scope.grads()
    }

    /// Patch logits `[B, 1, h, w]` for `candidate` judged against `condition`.
    pub fn discriminate(&self, condition: Var<'t, T>, candidate: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (cb, cc, ch, cw) = condition.value().dims4()?;
        let (xb, xc, xh, xw) = candidate.value().dims4()?;
        if (cb, ch, cw) != (xb, xh, xw) {
            return Err(TensorError::ShapeMismatch { op: "discriminate", left: condition.shape(), right: candidate.shape() });
        }
        if cc != self.disc.condition_channels || xc != self.disc.candidate_channels {
            return Err(TensorError::Invalid(format!(
                "discriminate: expected {}+{} channels, got {cc}+{xc}",
                self.disc.condition_channels, self.disc.candidate_channels
            )));
        }
        let pad = 1;
        let mut x = condition.concat_channels(candidate)?;
        for stage in &self.disc.stages {
            x = x.conv2d(self.scope.var(stage.layer.weight), self.scope.var(stage.layer.bias), stage.stride, pad)?;
            if stage.norm {
                x = x.instance_norm()?;
            }
            x = x.leaky_relu(LEAKY_SLOPE)?;
        }
        let head = self.disc.head;
        x.conv2d(self.scope.var(head.weight), self.scope.var(head.bias), 1, pad)
    }
}
