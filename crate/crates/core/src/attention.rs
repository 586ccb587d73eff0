//! Depth-guided attention: feature pooling of the two streams followed by
//! attention refinement into a spatial probability map.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{
    Activation, Conv2dLayer, Dense, Initializer, ParamId, ParamStore, Parameterized, Session,
};
use crate::tensor::{Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolingMode {
    /// `tanh(W1ᵀF_rgb) ⊙ tanh(W2ᵀF_g)`.
    Dot,
    /// `tanh(W3ᵀ(tanh(W1ᵀF_rgb) ∘ tanh(W2ᵀF_g)))`.
    Bilinear,
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingMode::Dot => "dot",
            PoolingMode::Bilinear => "bilinear",
        })
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(PoolingMode::Dot),
            "bilinear" => Ok(PoolingMode::Bilinear),
            _ => Err(Error::Config(format!("unknown pooling mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolingConfig {
    pub mode: PoolingMode,
    /// Pooled channel width `C`.
    pub channels: usize,
    /// Shared-layer width `K`.
    pub shared: usize,
}

impl PoolingConfig {
    pub fn full_scale() -> Self {
        PoolingConfig {
            mode: PoolingMode::Dot,
            channels: 64,
            shared: 256,
        }
    }

    pub fn toy() -> Self {
        PoolingConfig {
            mode: PoolingMode::Dot,
            channels: 8,
            shared: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.shared == 0 {
            return Err(Error::Config("pooling widths C and K must be >= 1".into()));
        }
        Ok(())
    }
}

/// Spatial attention weights `M×M×1`, positive and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<T> {
    pub weights: Tensor<T>,
}

impl<T: Real> AttentionMap<T> {
    pub fn extent(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn total(&self) -> f64 {
        self.weights.data().iter().map(|v| v.as_f64()).sum()
    }
}

/// Projections that pool the RGB and guidance maps into one `M×M×C` map.
#[derive(Clone, Debug)]
pub struct FeaturePooling {
    pub mode: PoolingMode,
    pub rgb_proj: Dense,
    pub guidance_proj: Dense,
    pub mix: Option<Dense>,
}

impl FeaturePooling {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        cfg: &PoolingConfig,
        rgb_width: usize,
        guidance_width: usize,
    ) -> Self {
        let c = cfg.channels;
        let rgb_proj = Dense::build(store, init, "pool.rgb", rgb_width, c, Activation::Tanh);
        let guidance_proj = Dense::build(
            store,
            init,
            "pool.guidance",
            guidance_width,
            c,
            Activation::Tanh,
        );
        let mix = (cfg.mode == PoolingMode::Bilinear)
            .then(|| Dense::build(store, init, "pool.mix", c, c, Activation::Tanh));
        FeaturePooling {
            mode: cfg.mode,
            rgb_proj,
            guidance_proj,
            mix,
        }
    }

    pub fn param_count(cfg: &PoolingConfig, rgb_width: usize, guidance_width: usize) -> usize {
        let c = cfg.channels;
        let mut n = Dense::param_count(rgb_width, c) + Dense::param_count(guidance_width, c);
        if cfg.mode == PoolingMode::Bilinear {
            n += Dense::param_count(c, c);
        }
        n
    }

    fn check_spatial<T: Real>(s: &Session<T>, f_rgb: Var, f_g: Var) -> Result<()> {
        let (a, b) = (s.tape.value(f_rgb).shape(), s.tape.value(f_g).shape());
        if a.len() != 3 || b.len() != 3 || a[..2] != b[..2] {
            return Err(Error::ShapeMismatch {
                op: "feature pooling",
                left: a.to_vec(),
                right: b.to_vec(),
            });
        }
        Ok(())
    }

    /// Per-position, per-channel product of the two tanh projections.
    pub fn pool_dot<T: Real>(&self, s: &mut Session<T>, f_rgb: Var, f_g: Var) -> Result<Var> {
        Self::check_spatial(s, f_rgb, f_g)?;
        let a = self.rgb_proj.forward(s, f_rgb)?;
        let b = self.guidance_proj.forward(s, f_g)?;
        s.tape.mul(a, b)
    }

    pub fn pool_bilinear<T: Real>(
        &self,
        s: &mut Session<T>,
        f_rgb: Var,
        f_g: Var,
    ) -> Result<Var> {
        let mix = self
            .mix
            .as_ref()
            .ok_or_else(|| Error::Config("bilinear pooling needs the mixing layer".into()))?;
        let joint = self.pool_dot(s, f_rgb, f_g)?;
        mix.forward(s, joint)
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, f_rgb: Var, f_g: Var) -> Result<Var> {
        match self.mode {
            PoolingMode::Dot => self.pool_dot(s, f_rgb, f_g),
            PoolingMode::Bilinear => self.pool_bilinear(s, f_rgb, f_g),
        }
    }
}

impl Parameterized for FeaturePooling {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.rgb_proj.param_ids();
        ids.extend(self.guidance_proj.param_ids());
        if let Some(m) = &self.mix {
            ids.extend(m.param_ids());
        }
        ids
    }
}

/// Shared tanh layer at every position, then a 1×1 conv to one channel and
/// a softmax across all `M×M` positions.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub shared: Dense,
    pub score: Conv2dLayer,
}

impl Refinement {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        cfg: &PoolingConfig,
    ) -> Self {
        let shared = Dense::build(
            store,
            init,
            "refine.shared",
            cfg.channels,
            cfg.shared,
            Activation::Tanh,
        );
        let score = Conv2dLayer::build(store, init, "refine.score", cfg.shared, 1, 1);
        Refinement { shared, score }
    }

    pub fn param_count(cfg: &PoolingConfig) -> usize {
        Dense::param_count(cfg.channels, cfg.shared) + Conv2dLayer::param_count(cfg.shared, 1, 1)
    }

    /// `M×M×C → M×M×1` attention map.
    pub fn refine<T: Real>(&self, s: &mut Session<T>, pooled: Var) -> Result<Var> {
        let shape = s.tape.value(pooled).shape().to_vec();
        if shape.len() != 3 || shape[2] != self.shared.inputs {
            return Err(Error::ShapeMismatch {
                op: "refine",
                left: shape,
                right: vec![self.shared.inputs],
            });
        }
        let sl = self.shared.forward(s, pooled)?;
        let scores = self.score.forward(s, sl)?;
        let flat = s.tape.reshape(scores, vec![shape[0] * shape[1]])?;
        let alpha = s.tape.softmax(flat, 0)?;
        s.tape.reshape(alpha, vec![shape[0], shape[1], 1])
    }
}

impl Parameterized for Refinement {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.shared.param_ids();
        ids.extend(self.score.param_ids());
        ids
    }
}
