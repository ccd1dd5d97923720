//! Generators, discriminators and the fixed feature extractor.

mod features;
mod params;
mod patchgan;
mod unet;

pub use features::{FeatureExtractor, FEATURE_WIDTHS};
pub use params::{ParamId, ParamScope, ParamStore};
pub use patchgan::{BoundDiscriminator, PatchDiscriminator, PatchGanConfig};
pub use unet::{
    BoundGenerators, ConvLayer, CrossViewGenerators, EncodeResult, Gen, GeneratorPair, Norm, UNetConfig, INIT_STD, LEAKY_SLOPE,
};
