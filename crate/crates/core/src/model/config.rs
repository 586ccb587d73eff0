use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::attention::{PoolingConfig, PoolingMode};
use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use crate::nn::{InitScheme, InitSpec};

/// Which rung of the ablation ladder to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// RGB stream only.
    Baseline,
    /// Both streams, spatially averaged and concatenated into a 3-layer classifier.
    ModelA,
    /// Bilinear pooling, no refinement.
    ModelB,
    /// Dot pooling, no refinement.
    ModelC,
    /// Full attention path without the auxiliary modality losses.
    ModelD,
    Proposed,
    /// Attention applied to both streams, single dense classifier.
    CrossModal,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Baseline,
        Variant::ModelA,
        Variant::ModelB,
        Variant::ModelC,
        Variant::ModelD,
        Variant::Proposed,
        Variant::CrossModal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::ModelA => "model_a",
            Variant::ModelB => "model_b",
            Variant::ModelC => "model_c",
            Variant::ModelD => "model_d",
            Variant::Proposed => "proposed",
            Variant::CrossModal => "cross_modal",
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(
            self,
            Variant::ModelD | Variant::Proposed | Variant::CrossModal
        )
    }

    pub fn uses_guidance(self) -> bool {
        self != Variant::Baseline
    }

    pub fn has_pooling(self) -> bool {
        matches!(
            self,
            Variant::ModelB
                | Variant::ModelC
                | Variant::ModelD
                | Variant::Proposed
                | Variant::CrossModal
        )
    }

    pub fn default_pooling(self) -> PoolingMode {
        if self == Variant::ModelB {
            PoolingMode::Bilinear
        } else {
            PoolingMode::Dot
        }
    }

    pub fn default_modality_loss(self) -> bool {
        matches!(self, Variant::ModelB | Variant::ModelC | Variant::Proposed)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub pooling: PoolingConfig,
    pub classifier_hidden: usize,
    pub aux_hidden: usize,
    pub num_classes: usize,
    pub variant: Variant,
    pub modality_loss: bool,
    pub init: InitSpec,
}

impl ModelConfig {
    /// VGG-16 streams at 224×224, C=64, K=256, 1024-wide heads.
    pub fn full_scale(variant: Variant, num_classes: usize) -> Self {
        Self::with_parts(
            variant,
            num_classes,
            BackboneConfig::vgg16(),
            PoolingConfig::full_scale(),
            1024,
            1024,
        )
    }

    /// 64×64 inputs, blocks [8, 16, 32], C=8, K=16, 64-wide heads.
    pub fn toy(variant: Variant, num_classes: usize) -> Self {
        Self::with_parts(
            variant,
            num_classes,
            BackboneConfig::toy(),
            PoolingConfig::toy(),
            64,
            64,
        )
    }

    fn with_parts(
        variant: Variant,
        num_classes: usize,
        backbone: BackboneConfig,
        pooling: PoolingConfig,
        classifier_hidden: usize,
        aux_hidden: usize,
    ) -> Self {
        ModelConfig {
            backbone,
            pooling: PoolingConfig {
                mode: variant.default_pooling(),
                ..pooling
            },
            classifier_hidden,
            aux_hidden,
            num_classes,
            variant,
            modality_loss: variant.default_modality_loss(),
            init: InitSpec::default(),
        }
    }

    /// Same configuration with another variant and that variant's defaults
    /// for pooling mode and modality loss.
    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut cfg = self.clone();
        cfg.variant = variant;
        cfg.pooling.mode = variant.default_pooling();
        cfg.modality_loss = variant.default_modality_loss();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.pooling.validate()?;
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.classifier_hidden == 0 || self.aux_hidden == 0 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let v = self.variant;
        let inconsistent = |what: &str| {
            Err(Error::Config(format!(
                "variant {v} is inconsistent with {what}"
            )))
        };
        match v {
            Variant::Baseline | Variant::ModelD if self.modality_loss => {
                return inconsistent("modality_loss = true")
            }
            Variant::ModelB | Variant::ModelC | Variant::Proposed if !self.modality_loss => {
                return inconsistent("modality_loss = false")
            }
            _ => {}
        }
        match v {
            Variant::ModelB if self.pooling.mode != PoolingMode::Bilinear => {
                inconsistent("pooling = dot")
            }
            Variant::ModelC | Variant::ModelD | Variant::Proposed
                if self.pooling.mode != PoolingMode::Dot =>
            {
                inconsistent("pooling = bilinear")
            }
            _ => Ok(()),
        }
    }

    /// `key = value` lines under the `model.` prefix.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let b = &self.backbone;
        [
            ("variant", self.variant.to_string()),
            ("input_extent", b.input_extent.to_string()),
            ("rgb_channels", b.rgb_channels.to_string()),
            ("guidance_channels", b.guidance_channels.to_string()),
            ("block_widths", join(&b.block_widths)),
            ("convs_per_block", join(&b.convs_per_block)),
            ("pooling", self.pooling.mode.to_string()),
            ("pool_channels", self.pooling.channels.to_string()),
            ("shared_width", self.pooling.shared.to_string()),
            ("classifier_hidden", self.classifier_hidden.to_string()),
            ("aux_hidden", self.aux_hidden.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("modality_loss", self.modality_loss.to_string()),
            ("init", self.init.scheme.to_string()),
            ("seed", self.init.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("model.{k}"), v))
        .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies `model.*` entries on top of `self`. `variant` is applied
    /// first so that its pooling and modality-loss defaults can be
    /// overridden by explicit keys. Unknown `model.*` keys are rejected.
    pub fn apply_entries(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        if let Some(v) = entries.get("model.variant") {
            *self = self.with_variant(v.parse()?);
        }
        for (key, value) in entries {
            let Some(k) = key.strip_prefix("model.") else {
                continue;
            };
            let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got `{value}`"));
            let uint = || value.parse::<usize>().map_err(|_| bad("an unsigned integer"));
            let list = || -> Result<Vec<usize>> {
                value
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("a comma-separated list of integers"))
            };
            match k {
                "variant" => {}
                "input_extent" => self.backbone.input_extent = uint()?,
                "rgb_channels" => self.backbone.rgb_channels = uint()?,
                "guidance_channels" => self.backbone.guidance_channels = uint()?,
                "block_widths" => self.backbone.block_widths = list()?,
                "convs_per_block" => self.backbone.convs_per_block = list()?,
                "pooling" => self.pooling.mode = value.parse()?,
                "pool_channels" => self.pooling.channels = uint()?,
                "shared_width" => self.pooling.shared = uint()?,
                "classifier_hidden" => self.classifier_hidden = uint()?,
                "aux_hidden" => self.aux_hidden = uint()?,
                "num_classes" => self.num_classes = uint()?,
                "modality_loss" => {
                    self.modality_loss = value.parse().map_err(|_| bad("true or false"))?
                }
                "init" => self.init.scheme = value.parse::<InitScheme>()?,
                "seed" => self.init.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let entries = crate::config::parse_kv(text, std::path::Path::new("<config>"))?;
        let mut cfg = ModelConfig::toy(Variant::Proposed, 2);
        cfg.apply_entries(&entries)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
