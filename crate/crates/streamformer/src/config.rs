//! JSON run configuration. Every field has a default; unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamformer_core::attention::SuppressionConfig;
use streamformer_core::stream::SegmenterConfig;
use streamformer_core::transducer::{DEFAULT_LM_WEIGHT, DEFAULT_MAX_SYMBOLS_PER_FRAME};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Runtime, SizeName, VariantName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub segmenter: SegmenterSection,
    pub gamma: f32,
    pub suppression: bool,
    pub memory_cap: Option<usize>,
    pub decode: DecodeSection,
    pub seed: u64,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            segmenter: SegmenterSection::default(),
            gamma: SuppressionConfig::DEFAULT_GAMMA,
            suppression: true,
            memory_cap: None,
            decode: DecodeSection::default(),
            seed: 0,
            paths: PathsSection::default(),
        }
    }
}

/// Preset plus optional overrides for narrow desk-scale models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: VariantName,
    pub size: SizeName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vgg_channels: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: VariantName::Conformer,
            size: SizeName::Small,
            dim: None,
            num_layers: None,
            vgg_channels: None,
            vocab_size: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterSection {
    pub left: usize,
    pub center: usize,
    pub right: usize,
    pub subsample_factor: usize,
    pub frame_shift_ms: f64,
}

impl Default for SegmenterSection {
    fn default() -> Self {
        let d = SegmenterConfig::default();
        Self {
            left: d.left,
            center: d.center,
            right: d.right,
            subsample_factor: d.subsample_factor,
            frame_shift_ms: d.frame_shift_ms,
        }
    }
}

impl From<SegmenterSection> for SegmenterConfig {
    fn from(s: SegmenterSection) -> Self {
        SegmenterConfig {
            left: s.left,
            center: s.center,
            right: s.right,
            subsample_factor: s.subsample_factor,
            frame_shift_ms: s.frame_shift_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam,
    /// Beam search with the LM from `paths.lm`.
    Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub mode: DecodeMode,
    pub beam: usize,
    pub lm_weight: f64,
    pub max_symbols_per_frame: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            beam: 4,
            lm_weight: DEFAULT_LM_WEIGHT,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
        }
    }
}

/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    /// Bigram training text, one sentence per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lm: Option<PathBuf>,
    /// Token table, one entry per line; line `i` is the text of id `i`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ctx = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(&ctx, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{ctx}: {e}")))?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        SegmenterConfig::from(self.segmenter).validate()?;
        SuppressionConfig::new(self.gamma)?;
        if self.decode.beam == 0 {
            return Err(Error::Config("decode.beam must be >= 1".into()));
        }
        if self.decode.max_symbols_per_frame == 0 {
            return Err(Error::Config(
                "decode.max_symbols_per_frame must be >= 1".into(),
            ));
        }
        if !(self.decode.lm_weight.is_finite() && self.decode.lm_weight >= 0.0) {
            return Err(Error::Config(
                "decode.lm_weight must be finite and >= 0".into(),
            ));
        }
        if self.decode.mode == DecodeMode::Fusion && self.paths.lm.is_none() {
            return Err(Error::Config("fusion decoding needs paths.lm".into()));
        }
        self.model_spec().validate()
    }

    /// Preset geometry with any overrides applied.
    pub fn model_spec(&self) -> ModelSpec {
        let m = &self.model;
        let mut spec = ModelSpec::preset(m.variant, m.size);
        if let Some(d) = m.dim {
            spec.dim = d;
        }
        if let Some(n) = m.num_layers {
            spec.num_layers = n;
        }
        if let Some(c) = m.vgg_channels {
            spec.vgg_channels = c;
        }
        if let Some(v) = m.vocab_size {
            spec.vocab_size = v;
        }
        spec
    }

    pub fn runtime(&self) -> Runtime {
        Runtime {
            segmenter: self.segmenter.into(),
            suppression: SuppressionConfig {
                gamma: self.gamma,
                enabled: self.suppression,
            },
            memory_cap: self.memory_cap,
        }
    }
}

impl PathsSection {
    fn resolve(&mut self, dir: &Path) {
        for p in [&mut self.weights, &mut self.lm, &mut self.vocab]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_preset_setup() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(
            (
                cfg.segmenter.left,
                cfg.segmenter.center,
                cfg.segmenter.right
            ),
            (16, 32, 8)
        );
        assert_eq!(cfg.gamma, 0.5);
        assert_eq!(cfg.decode.lm_weight, 0.25);
        assert_eq!(cfg.memory_cap, None);
        let spec = cfg.model_spec();
        assert_eq!(
            (spec.dim, spec.num_layers, spec.heads, spec.conv_kernel),
            (144, 16, 4, 32)
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"gama": 0.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"segmenter": {"lft": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"size": "XL"}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"gamma": -1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"segmenter": {"center": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"decode": {"beam": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"decode": {"mode": "fusion"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"dim": 10}}"#).is_err());
    }

    #[test]
    fn presets_resolve() {
        let cfg =
            RunConfig::from_json(r#"{"model": {"variant": "transformer", "size": "M"}}"#).unwrap();
        assert_eq!(cfg.model_spec().dim, 288);
        let cfg = RunConfig::from_json(r#"{"model": {"size": "medium"}}"#).unwrap();
        assert_eq!(cfg.model_spec().dim, 256);
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"paths": {"lm": "text.txt", "vocab": "/abs/v.txt"}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.lm.unwrap(), dir.path().join("text.txt"));
        assert_eq!(cfg.paths.vocab.unwrap(), PathBuf::from("/abs/v.txt"));
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            (0usize..40, 1usize..64, 0usize..16, 1usize..8),
            (0.0f32..4.0, any::<bool>(), proptest::option::of(0usize..20)),
            (0usize..3, 1usize..10, 0.0f64..2.0, 1usize..10),
            any::<u64>(),
            (0usize..2, 0usize..2, proptest::option::of(1usize..4)),
        )
            .prop_map(
                |(seg, (gamma, sup, cap), (mode, beam, lmw, maxs), seed, (v, s, layers))| {
                    RunConfig {
                        model: ModelSection {
                            variant: [VariantName::Conformer, VariantName::Transformer][v],
                            size: [SizeName::Small, SizeName::Medium][s],
                            dim: Some(16),
                            num_layers: layers,
                            vgg_channels: None,
                            vocab_size: None,
                        },
                        segmenter: SegmenterSection {
                            left: seg.0,
                            center: seg.1,
                            right: seg.2,
                            subsample_factor: seg.3,
                            frame_shift_ms: 10.0,
                        },
                        gamma,
                        suppression: sup,
                        memory_cap: cap,
                        decode: DecodeSection {
                            mode: [DecodeMode::Greedy, DecodeMode::Beam, DecodeMode::Fusion][mode],
                            beam,
                            lm_weight: lmw,
                            max_symbols_per_frame: maxs,
                        },
                        seed,
                        paths: PathsSection {
                            weights: None,
                            lm: Some(PathBuf::from("lm.txt")),
                            vocab: None,
                        },
                    }
                },
            )
    }

    proptest! {
        #[test]
        fn json_round_trip(cfg in arb_config()) {
            let text = cfg.to_json();
            let back = RunConfig::from_json(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_json(), text);
        }
    }
}
