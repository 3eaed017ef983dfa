//! Acoustic encoder: VGG front-end, then a stack of Conformer (or
//! Transformer) blocks running segment by segment with per-layer memory.

mod conformer;
pub mod vgg;

pub use conformer::{conformer_block, ConformerBlock, ConvModule, FeedForward, Norm, NORM_EPS};
pub use vgg::{
    subsampled_len, vgg_subsample, FrontEnd, VggShape, VggWeights, RAW_LOOKAHEAD_FRAMES,
};

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{MemoryBank, SegmentInput, SuppressionConfig};
use crate::error::{Error, Result};
use crate::params::{impl_params, Init, Params, INIT_SCALE};
use crate::rng::{SeededRng, FEATURE_BINS};
use crate::stream::SegmenterConfig;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Transformer,
    Conformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSize {
    Small,
    Medium,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub num_layers: usize,
    pub dim: usize,
    pub heads: usize,
    /// Depthwise kernel width of the convolution module.
    pub conv_kernel: usize,
    pub ffn_expansion: usize,
    /// Output channels of the two VGG stages.
    pub vgg_channels: [usize; 2],
    pub feature_bins: usize,
    pub segmenter: SegmenterConfig,
    pub suppression: SuppressionConfig,
    pub memory_cap: Option<usize>,
}

impl EncoderConfig {
    /// Preset geometries: 16 layers, 4 heads, kernel 32; model
    /// width 144/256 for Conformer S/M and 160/288 for Transformer S/M.
    pub fn preset(variant: Variant, size: ModelSize) -> Self {
        let dim = match (variant, size) {
            (Variant::Conformer, ModelSize::Small) => 144,
            (Variant::Conformer, ModelSize::Medium) => 256,
            (Variant::Transformer, ModelSize::Small) => 160,
            (Variant::Transformer, ModelSize::Medium) => 288,
        };
        Self {
            variant,
            num_layers: 16,
            dim,
            heads: 4,
            conv_kernel: 32,
            ffn_expansion: 4,
            vgg_channels: [32, 64],
            feature_bins: FEATURE_BINS,
            segmenter: SegmenterConfig::default(),
            suppression: SuppressionConfig::default(),
            memory_cap: None,
        }
    }

    /// Narrow model for tests and desk-scale runs.
    pub fn toy(dim: usize, num_layers: usize) -> Self {
        Self {
            num_layers,
            dim,
            vgg_channels: [4, 8],
            ..Self::preset(Variant::Conformer, ModelSize::Small)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be >= 1".into()));
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.variant == Variant::Conformer && self.conv_kernel == 0 {
            return Err(Error::Config("conv_kernel must be >= 1".into()));
        }
        if self.ffn_expansion == 0 || self.vgg_channels.contains(&0) || self.feature_bins == 0 {
            return Err(Error::Config("layer widths must be nonzero".into()));
        }
        self.segmenter.validate()?;
        SuppressionConfig::new(self.suppression.gamma)?;
        Ok(())
    }

    pub fn vgg_shape(&self) -> VggShape {
        VggShape {
            bins: self.feature_bins,
            channels: self.vgg_channels,
            dim: self.dim,
        }
    }

    fn conv_kernel(&self) -> Option<usize> {
        match self.variant {
            Variant::Conformer => Some(self.conv_kernel),
            Variant::Transformer => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub front_end: VggWeights,
    pub layers: Vec<ConformerBlock>,
}

impl_params!(EncoderWeights { front_end, layers });

impl EncoderWeights {
    pub fn init(config: &EncoderConfig, init: &mut Init<'_>) -> Result<Self> {
        config.validate()?;
        let front_end = VggWeights::init(config.vgg_shape(), init);
        let layers = (0..config.num_layers)
            .map(|_| {
                ConformerBlock::init(
                    config.dim,
                    config.heads,
                    config.ffn_expansion,
                    config.conv_kernel(),
                    init,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { front_end, layers })
    }
}

/// Checks that `actual` has exactly the parameter names and shapes of
/// `expected`.
pub(crate) fn check_same_layout(expected: &dyn ParamsDyn, actual: &dyn ParamsDyn) -> Result<()> {
    let mut want = Vec::new();
    expected.visit_dyn(&mut |name, m| want.push((alloc::string::String::from(name), m.shape())));
    let mut got = Vec::new();
    actual.visit_dyn(&mut |name, m| got.push((alloc::string::String::from(name), m.shape())));
    if want.len() != got.len() {
        return Err(Error::Config(format!(
            "expected {} parameter tensors, found {}",
            want.len(),
            got.len()
        )));
    }
    for ((wn, ws), (gn, gs)) in want.iter().zip(&got) {
        if wn != gn || ws != gs {
            return Err(Error::Config(format!(
                "parameter {gn} {}x{} does not match expected {wn} {}x{}",
                gs.0, gs.1, ws.0, ws.1
            )));
        }
    }
    Ok(())
}

/// Object-safe view of [`Params`] used for layout checks.
pub(crate) trait ParamsDyn {
    fn visit_dyn(&self, f: &mut dyn FnMut(&str, &Matrix));
}

impl<T: Params> ParamsDyn for T {
    fn visit_dyn(&self, f: &mut dyn FnMut(&str, &Matrix)) {
        self.visit("", f)
    }
}

/// Immutable encoder shared by any number of stream sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    weights: EncoderWeights,
}

impl Encoder {
    pub fn new(config: EncoderConfig, weights: EncoderWeights) -> Result<Self> {
        config.validate()?;
        let template = EncoderWeights::init(&config, &mut Init::Zeros)?;
        check_same_layout(&template, &weights)?;
        Ok(Self { config, weights })
    }

    /// Seeded uniform(-0.1, 0.1) weights.
    pub fn random(config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let weights = EncoderWeights::init(
            &config,
            &mut Init::Uniform {
                rng: &mut rng,
                scale: INIT_SCALE,
            },
        )?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut EncoderWeights {
        &mut self.weights
    }

    pub fn new_banks(&self) -> Vec<MemoryBank> {
        (0..self.config.num_layers)
            .map(|_| MemoryBank::new(self.config.memory_cap))
            .collect()
    }

    pub fn front_end(&self) -> FrontEnd {
        FrontEnd::new(self.config.vgg_shape())
    }

    /// Whole-utterance front-end.
    pub fn subsample(&self, features: &Matrix) -> Result<Matrix> {
        vgg_subsample(features, &self.weights.front_end, self.config.vgg_shape())
    }

    /// Runs one segment through every layer and returns the center rows of
    /// the last layer. Each bank in `banks` gains one slot.
    pub fn forward_segment(&self, seg: &SegmentInput, banks: &mut [MemoryBank]) -> Result<Matrix> {
        if banks.len() != self.weights.layers.len() {
            return Err(Error::Config(format!(
                "expected {} memory banks, got {}",
                self.weights.layers.len(),
                banks.len()
            )));
        }
        let mut x = seg.clone();
        for (block, bank) in self.weights.layers.iter().zip(banks.iter_mut()) {
            x = conformer_block(&x, bank, block, self.config.suppression)?;
        }
        Ok(x.center())
    }
}
