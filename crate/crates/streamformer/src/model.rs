//! Full system: streaming encoder plus transducer predictor and joiner.

use serde::{Deserialize, Serialize};
use streamformer_core::attention::SuppressionConfig;
use streamformer_core::encoder::{Encoder, EncoderConfig, EncoderWeights, ModelSize, Variant};
use streamformer_core::params::{Init, Params};
use streamformer_core::stream::SegmenterConfig;
use streamformer_core::transducer::{Transducer, TransducerConfig, Vocab};
use streamformer_core::Matrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Conformer,
    Transformer,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::Conformer => Variant::Conformer,
            VariantName::Transformer => Variant::Transformer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeName {
    #[serde(rename = "S", alias = "s", alias = "small")]
    Small,
    #[serde(rename = "M", alias = "m", alias = "medium")]
    Medium,
}

impl From<SizeName> for ModelSize {
    fn from(s: SizeName) -> Self {
        match s {
            SizeName::Small => ModelSize::Small,
            SizeName::Medium => ModelSize::Medium,
        }
    }
}

/// Architecture hyper-parameters. Stored in weight files so a file fully
/// describes the network it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: VariantName,
    pub num_layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub conv_kernel: usize,
    pub ffn_expansion: usize,
    pub vgg_channels: [usize; 2],
    pub feature_bins: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub predictor_hidden: usize,
    pub joint_dim: usize,
}

impl ModelSpec {
    pub fn preset(variant: VariantName, size: SizeName) -> Self {
        let enc = EncoderConfig::preset(variant.into(), size.into());
        Self::from_parts(variant, &enc, &TransducerConfig::standard(enc.dim))
    }

    fn from_parts(variant: VariantName, enc: &EncoderConfig, t: &TransducerConfig) -> Self {
        Self {
            variant,
            num_layers: enc.num_layers,
            dim: enc.dim,
            heads: enc.heads,
            conv_kernel: enc.conv_kernel,
            ffn_expansion: enc.ffn_expansion,
            vgg_channels: enc.vgg_channels,
            feature_bins: enc.feature_bins,
            vocab_size: t.vocab.size,
            embed_dim: t.embed_dim,
            predictor_hidden: t.hidden,
            joint_dim: t.joint_dim,
        }
    }

    pub fn encoder_config(&self, rt: &Runtime) -> EncoderConfig {
        EncoderConfig {
            variant: self.variant.into(),
            num_layers: self.num_layers,
            dim: self.dim,
            heads: self.heads,
            conv_kernel: self.conv_kernel,
            ffn_expansion: self.ffn_expansion,
            vgg_channels: self.vgg_channels,
            feature_bins: self.feature_bins,
            segmenter: rt.segmenter,
            suppression: rt.suppression,
            memory_cap: rt.memory_cap,
        }
    }

    pub fn transducer_config(&self) -> TransducerConfig {
        TransducerConfig {
            vocab: Vocab {
                size: self.vocab_size,
            },
            embed_dim: self.embed_dim,
            hidden: self.predictor_hidden,
            joint_dim: self.joint_dim,
            encoder_dim: self.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config(&Runtime::default()).validate()?;
        if self.vocab_size == 0
            || self.embed_dim == 0
            || self.predictor_hidden == 0
            || self.joint_dim == 0
        {
            return Err(Error::Config("transducer widths must be nonzero".into()));
        }
        Ok(())
    }
}

/// Streaming settings that do not change the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Runtime {
    pub segmenter: SegmenterConfig,
    pub suppression: SuppressionConfig,
    pub memory_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoder: Encoder,
    pub transducer: Transducer,
}

impl Model {
    /// Seeded uniform(-0.1, 0.1) weights. The transducer draws from the
    /// stream seeded with `seed + 1`.
    pub fn random(spec: ModelSpec, rt: &Runtime, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            encoder: Encoder::random(spec.encoder_config(rt), seed)?,
            transducer: Transducer::random(spec.transducer_config(), seed.wrapping_add(1)),
        })
    }

    pub fn zeros(spec: ModelSpec, rt: &Runtime) -> Result<Self> {
        spec.validate()?;
        let cfg = spec.encoder_config(rt);
        let weights = EncoderWeights::init(&cfg, &mut Init::Zeros)?;
        Ok(Self {
            spec,
            encoder: Encoder::new(cfg, weights)?,
            transducer: Transducer::init(spec.transducer_config(), &mut Init::Zeros),
        })
    }
}

impl Params for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        self.encoder.weights().visit(&join(prefix, "encoder"), f);
        self.transducer
            .weights()
            .visit(&join(prefix, "transducer"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        self.encoder
            .weights_mut()
            .visit_mut(&join(prefix, "encoder"), f);
        self.transducer
            .weights_mut()
            .visit_mut(&join(prefix, "transducer"), f);
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Parameters of encoder, predictor and joiner together.
pub fn param_count(spec: &ModelSpec) -> Result<usize> {
    Ok(Model::zeros(*spec, &Runtime::default())?.param_count())
}
