//! Fixed, seeded convolutional feature extractor ψ for the contextual loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamScope, ParamStore};
use super::unet::ConvLayer;
use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Element;

pub const FEATURE_WIDTHS: [usize; 3] = [16, 32, 64];

/// Three conv 3×3 + relu stages with 2×2 average pooling after the first two.
/// Weights come from `N(0, 2/fan_in)` and are never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T: Element> {
    seed: u64,
    params: ParamStore<T>,
    stages: Vec<ConvLayer>,
}

impl<T: Element> FeatureExtractor<T> {
    pub fn new(seed: u64, in_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut stages = Vec::new();
        let mut cin = in_channels;
        for (i, &cout) in FEATURE_WIDTHS.iter().enumerate() {
            let fan_in = (cin * 9) as f64;
            stages.push(ConvLayer {
                weight: params.add_gaussian(format!("psi.conv{}.weight", i + 1), vec![cout, cin, 3, 3], (2.0 / fan_in).sqrt(), &mut rng),
                bias: params.add_zeros(format!("psi.conv{}.bias", i + 1), vec![cout]),
            });
            cin = cout;
        }
        FeatureExtractor { seed, params, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Stage-2 (pre-pool) and stage-3 activations. Gradient reaches `image`
    /// but never ψ's weights, which enter the tape as constants.
    pub fn extract<'t>(&self, tape: &'t Tape<T>, image: Var<'t, T>) -> Result<Vec<Var<'t, T>>, TensorError> {
        let scope = ParamScope::new(&self.params, tape, false);
        let mut x = image;
        let mut out = Vec::with_capacity(2);
        for (i, layer) in self.stages.iter().enumerate() {
            x = x.conv2d(scope.var(layer.weight), scope.var(layer.bias), 1, 1)?.relu()?;
            if i > 0 {
                out.push(x);
            }
            if i + 1 < self.stages.len() {
                x = x.avg_pool2d(2)?;
            }
        }
        Ok(out)
    }
}
