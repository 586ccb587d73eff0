//! Dual-stream convolutional feature extractor.
//!
//! The RGB stream yields its last block output. The guidance stream
//! average-pools every block output down to the final spatial extent and
//! concatenates them along channels, so its width is the sum of the block
//! widths.

use crate::error::{Error, Result};
use crate::nn::{ConvBlock, ConvBlockSpec, Initializer, ParamId, ParamStore, Parameterized, Session};
use crate::tensor::{Real, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub input_extent: usize,
    pub rgb_channels: usize,
    pub guidance_channels: usize,
    pub block_widths: Vec<usize>,
    pub convs_per_block: Vec<usize>,
}

impl BackboneConfig {
    /// VGG-16 at 224×224 with a single-channel guidance raster.
    pub fn vgg16() -> Self {
        BackboneConfig {
            input_extent: 224,
            rgb_channels: 3,
            guidance_channels: 1,
            block_widths: vec![64, 128, 256, 512, 512],
            convs_per_block: vec![2, 2, 3, 3, 3],
        }
    }

    /// 64×64 inputs, blocks [8, 16, 32] with one conv each.
    pub fn toy() -> Self {
        BackboneConfig {
            input_extent: 64,
            rgb_channels: 3,
            guidance_channels: 1,
            block_widths: vec![8, 16, 32],
            convs_per_block: vec![1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_widths.is_empty() {
            return Err(Error::Config("backbone needs at least one block".into()));
        }
        if self.block_widths.len() != self.convs_per_block.len() {
            return Err(Error::Config(format!(
                "{} block widths but {} conv counts",
                self.block_widths.len(),
                self.convs_per_block.len()
            )));
        }
        let factor = 1usize << self.block_widths.len();
        if self.input_extent == 0 || self.input_extent % factor != 0 {
            return Err(Error::Config(format!(
                "input extent {} is not divisible by 2^{}",
                self.input_extent,
                self.block_widths.len()
            )));
        }
        if self.rgb_channels == 0 || self.guidance_channels == 0 {
            return Err(Error::Config("input channel counts must be positive".into()));
        }
        for spec in self.specs() {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn specs(&self) -> impl Iterator<Item = ConvBlockSpec> + '_ {
        self.block_widths
            .iter()
            .zip(&self.convs_per_block)
            .map(|(&out_channels, &convs)| ConvBlockSpec {
                out_channels,
                convs,
            })
    }

    /// Final spatial extent `M`.
    pub fn feature_extent(&self) -> usize {
        self.input_extent >> self.block_widths.len()
    }

    /// Channel width `φ` of the RGB feature map.
    pub fn rgb_width(&self) -> usize {
        *self.block_widths.last().unwrap_or(&0)
    }

    /// Channel width `V` of the concatenated guidance map.
    pub fn guidance_width(&self) -> usize {
        self.block_widths.iter().sum()
    }

    pub fn stream_param_count(&self, in_channels: usize) -> usize {
        let mut cin = in_channels;
        self.specs()
            .map(|spec| {
                let n = spec.param_count(cin);
                cin = spec.out_channels;
                n
            })
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct Stream {
    pub blocks: Vec<ConvBlock>,
}

impl Stream {
    fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        prefix: &str,
        in_channels: usize,
        cfg: &BackboneConfig,
    ) -> Result<Self> {
        let mut cin = in_channels;
        let mut blocks = Vec::new();
        for (i, spec) in cfg.specs().enumerate() {
            blocks.push(ConvBlock::build(
                store,
                init,
                &format!("{prefix}.block{}", i + 1),
                cin,
                spec,
            )?);
            cin = spec.out_channels;
        }
        Ok(Stream { blocks })
    }

    /// Output of every block, in order.
    pub fn forward_all<T: Real>(&self, s: &mut Session<T>, mut x: Var) -> Result<Vec<Var>> {
        let mut outs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            x = block.forward(s, x)?;
            outs.push(x);
        }
        Ok(outs)
    }
}

impl Parameterized for Stream {
    fn param_ids(&self) -> Vec<ParamId> {
        self.blocks.iter().flat_map(|b| b.param_ids()).collect()
    }
}

/// Independent RGB and guidance streams of identical block layout. The
/// guidance stream is absent for RGB-only models.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub cfg: BackboneConfig,
    pub rgb: Stream,
    pub guidance: Option<Stream>,
}

impl Backbone {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        cfg: &BackboneConfig,
        with_guidance: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let rgb = Stream::build(store, init, "rgb", cfg.rgb_channels, cfg)?;
        let guidance = if with_guidance {
            Some(Stream::build(
                store,
                init,
                "guidance",
                cfg.guidance_channels,
                cfg,
            )?)
        } else {
            None
        };
        Ok(Backbone {
            cfg: cfg.clone(),
            rgb,
            guidance,
        })
    }

    fn check_input<T: Real>(&self, s: &Session<T>, x: Var, channels: usize) -> Result<()> {
        let e = self.cfg.input_extent;
        let shape = s.tape.value(x).shape();
        if shape != [e, e, channels] {
            return Err(Error::ShapeMismatch {
                op: "backbone input",
                left: shape.to_vec(),
                right: vec![e, e, channels],
            });
        }
        Ok(())
    }

    /// `H×H×3 → M×M×φ`.
    pub fn extract_rgb<T: Real>(&self, s: &mut Session<T>, image: Var) -> Result<Var> {
        self.check_input(s, image, self.cfg.rgb_channels)?;
        let outs = self.rgb.forward_all(s, image)?;
        Ok(*outs.last().expect("at least one block"))
    }

    /// `H×H×g → M×M×V`. A single-channel raster is replicated when the
    /// stream was configured for more input channels.
    pub fn extract_guidance<T: Real>(&self, s: &mut Session<T>, image: Var) -> Result<Var> {
        let stream = self
            .guidance
            .as_ref()
            .ok_or_else(|| Error::Config("model has no guidance stream".into()))?;
        let mut image = image;
        let want = self.cfg.guidance_channels;
        if want > 1 && s.tape.value(image).shape().last() == Some(&1) {
            image = s.tape.concat_last(&vec![image; want])?;
        }
        self.check_input(s, image, want)?;
        let outs = stream.forward_all(s, image)?;
        let m = self.cfg.feature_extent();
        let mut aligned = Vec::with_capacity(outs.len());
        for out in outs {
            let extent = s.tape.value(out).shape()[0];
            let a = if extent == m {
                out
            } else {
                s.tape.avgpool2d(out, extent / m)?
            };
            aligned.push(a);
        }
        s.tape.concat_last(&aligned)
    }
}

impl Parameterized for Backbone {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.rgb.param_ids();
        if let Some(g) = &self.guidance {
            ids.extend(g.param_ids());
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InitSpec;
    use crate::tensor::Tensor;

    fn toy_backbone() -> (ParamStore<f64>, Backbone) {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(InitSpec::default());
        let b = Backbone::build(&mut store, &mut init, &BackboneConfig::toy(), true).unwrap();
        (store, b)
    }

    #[test]
    fn full_scale_widths() {
        let cfg = BackboneConfig::vgg16();
        cfg.validate().unwrap();
        assert_eq!(cfg.feature_extent(), 7);
        assert_eq!(cfg.rgb_width(), 512);
        assert_eq!(cfg.guidance_width(), 1472);
        assert_eq!(cfg.stream_param_count(3), 14_714_688);
    }

    #[test]
    fn toy_shapes() {
        let (store, b) = toy_backbone();
        let mut s = Session::new(&store);
        let rgb = s.input(Tensor::full(vec![64, 64, 3], 0.5));
        let g = s.input(Tensor::full(vec![64, 64, 1], 0.5));
        let fr = b.extract_rgb(&mut s, rgb).unwrap();
        let fg = b.extract_guidance(&mut s, g).unwrap();
        assert_eq!(s.tape.value(fr).shape(), &[8, 8, 32]);
        assert_eq!(s.tape.value(fg).shape(), &[8, 8, 56]);
    }

    #[test]
    fn guidance_concat_order() {
        let (store, b) = toy_backbone();
        let mut s = Session::new(&store);
        let mut rng_vals = Vec::new();
        for i in 0..64 * 64 {
            rng_vals.push(((i * 37 % 101) as f64) / 101.0);
        }
        let g = s.input(Tensor::new(vec![64, 64, 1], rng_vals).unwrap());
        let fg = b.extract_guidance(&mut s, g).unwrap();
        let fg = s.tape.value(fg).clone();
        let outs = b.guidance.as_ref().unwrap().forward_all(&mut s, g).unwrap();
        let first = s.tape.avgpool2d(outs[0], 4).unwrap();
        let first = s.tape.value(first);
        for p in 0..64 {
            for c in 0..8 {
                assert_eq!(fg.data()[p * 56 + c], first.data()[p * 8 + c]);
            }
        }
    }

    #[test]
    fn rejects_wrong_extent() {
        let (store, b) = toy_backbone();
        let mut s = Session::new(&store);
        let rgb = s.input(Tensor::zeros(vec![32, 32, 3]));
        assert!(b.extract_rgb(&mut s, rgb).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackboneConfig::toy();
        cfg.input_extent = 60;
        assert!(cfg.validate().is_err());
        let mut cfg = BackboneConfig::toy();
        cfg.convs_per_block.pop();
        assert!(cfg.validate().is_err());
    }
}
