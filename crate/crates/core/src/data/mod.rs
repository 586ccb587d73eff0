//! RGB-D samples: raster I/O, depth preprocessing, dataset manifests, the
//! synthetic identity generator and gallery/probe protocols.

mod manifest;
pub mod pnm;
mod protocol;
mod synth;

use std::fmt;
use std::str::FromStr;

pub use manifest::{load_manifest, Dataset, DatasetManifest, ManifestEntry, MANIFEST_NAME};
pub use pnm::PnmImage;
pub use protocol::{split_protocol, ProtocolSplit, SplitScheme};
pub use synth::{
    format_mix, parse_mix, synth_generate, synth_samples, GuidanceKind, SynthConfig, SynthSample,
    DEPTH_PLANES,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variation {
    Neutral,
    Pose,
    Expression,
    Occlusion,
    Illumination,
    Time,
}

impl Variation {
    pub const ALL: [Variation; 6] = [
        Variation::Neutral,
        Variation::Pose,
        Variation::Expression,
        Variation::Occlusion,
        Variation::Illumination,
        Variation::Time,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variation::Neutral => "neutral",
            Variation::Pose => "pose",
            Variation::Expression => "expression",
            Variation::Occlusion => "occlusion",
            Variation::Illumination => "illumination",
            Variation::Time => "time",
        }
    }
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variation::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variation `{s}`")))
    }
}

/// Co-registered RGB (`H×H×3`) and guidance (`H×H×1`) rasters in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RGBDSample {
    pub rgb: Tensor<f32>,
    pub guidance: Tensor<f32>,
    pub identity: usize,
    pub variation: Variation,
}

impl RGBDSample {
    pub fn extent(&self) -> usize {
        self.rgb.shape()[0]
    }

    /// Builds a sample from decoded rasters. With `planes`, the guidance
    /// raster holds raw range values and is clipped and normalized;
    /// otherwise it is scaled by its maxval.
    pub fn from_images(
        identity: usize,
        variation: Variation,
        rgb: &PnmImage,
        guidance: &PnmImage,
        planes: Option<(u32, u32)>,
    ) -> Result<Self> {
        if rgb.channels != 3 || guidance.channels != 1 {
            return Err(Error::Config(format!(
                "expected 3-channel RGB and 1-channel guidance, got {} and {}",
                rgb.channels, guidance.channels
            )));
        }
        if (rgb.width, rgb.height) != (guidance.width, guidance.height) {
            return Err(Error::ShapeMismatch {
                op: "rgbd sample",
                left: vec![rgb.height, rgb.width],
                right: vec![guidance.height, guidance.width],
            });
        }
        if rgb.width != rgb.height {
            return Err(Error::Config(format!(
                "rasters must be square, got {}x{}",
                rgb.width, rgb.height
            )));
        }
        let (h, w) = (rgb.height, rgb.width);
        let g = match planes {
            Some((near, far)) => normalize_depth(&guidance.samples, near, far)?,
            None => guidance.to_unit(),
        };
        Ok(RGBDSample {
            rgb: Tensor::new(vec![h, w, 3], rgb.to_unit())?,
            guidance: Tensor::new(vec![h, w, 1], g)?,
            identity,
            variation,
        })
    }
}

/// Maps raw range values in `[near, far]` linearly onto `[0, 1]`; values
/// outside the clipping planes become 0.
pub fn normalize_depth(raw: &[u16], near: u32, far: u32) -> Result<Vec<f32>> {
    if near >= far {
        return Err(Error::Config(format!(
            "near plane {near} must be below far plane {far}"
        )));
    }
    let span = (far - near) as f64;
    Ok(raw
        .iter()
        .map(|&v| {
            let v = v as u32;
            if v < near || v > far {
                0.0
            } else {
                ((v - near) as f64 / span) as f32
            }
        })
        .collect())
}
