use std::path::Path;
use std::str::FromStr;

use crate::data::{PnmImage, RGBDSample};
use crate::error::{Error, Result};
use crate::model::{Model, Phase};
use crate::nn::Session;
use crate::tensor::{Real, Tensor};

/// Feature map a Grad-CAM is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CamLayer {
    /// Output of the last RGB conv block.
    #[default]
    Rgb,
    /// Concatenated, aligned guidance features.
    Guidance,
    /// Cross-stream pooled map.
    Pooled,
}

impl FromStr for CamLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(CamLayer::Rgb),
            "guidance" => Ok(CamLayer::Guidance),
            "pooled" => Ok(CamLayer::Pooled),
            _ => Err(Error::Config(format!("unknown grad-cam layer `{s}`"))),
        }
    }
}

/// A spatial map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// `h×w`, row-major.
    pub values: Tensor<f64>,
}

impl Heatmap {
    /// Grad-CAM combination of an `h×w×c` feature map and its gradient:
    /// channel weights are spatial means of the gradient, the map is the
    /// ReLU of the weighted channel sum, min-max scaled.
    pub fn from_features(features: &Tensor<f64>, grads: &Tensor<f64>) -> Result<Self> {
        if features.shape() != grads.shape() || features.rank() != 3 {
            return Err(Error::ShapeMismatch {
                op: "grad_cam",
                left: features.shape().to_vec(),
                right: grads.shape().to_vec(),
            });
        }
        let (h, w, c) = (features.shape()[0], features.shape()[1], features.shape()[2]);
        let mut weights = vec![0.0; c];
        for (i, g) in grads.data().iter().enumerate() {
            weights[i % c] += g;
        }
        weights.iter_mut().for_each(|v| *v /= (h * w) as f64);
        let raw: Vec<f64> = features
            .data()
            .chunks_exact(c)
            .map(|a| a.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>().max(0.0))
            .collect();
        Ok(Heatmap { values: Tensor::new(vec![h, w], min_max(&raw))? })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Nearest-neighbour resize to `size×size`.
    pub fn upsample(&self, size: usize) -> Heatmap {
        Heatmap { values: nearest(&self.values, size) }
    }

    /// `(row, col)` of the first maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let i = crate::model::argmax(self.values.data());
        (i / self.width(), i % self.width())
    }
}

/// Scales to `[0, 1]`; a constant input maps to all zeros.
fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

fn nearest(t: &Tensor<f64>, size: usize) -> Tensor<f64> {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            out.push(t.data()[(y * h / size) * w + x * w / size]);
        }
    }
    Tensor::new(vec![size, size], out).expect("square raster")
}

pub fn grad_cam<T: Real>(
    model: &Model<T>,
    sample: &RGBDSample,
    class: usize,
    layer: CamLayer,
) -> Result<Heatmap> {
    let classes = model.num_classes();
    if class >= classes {
        return Err(Error::LabelOutOfRange { label: class, classes });
    }
    let mut s = Session::new(model.params());
    let out = model.forward_tensors(&mut s, &sample.rgb.cast(), &sample.guidance.cast(), Phase::Infer)?;
    let target = match layer {
        CamLayer::Rgb => out.f_rgb,
        CamLayer::Guidance => out.f_guidance.ok_or(Error::MissingComponent("guidance features"))?,
        CamLayer::Pooled => out.pooled.ok_or(Error::MissingComponent("pooled features"))?,
    };
    let score = s.tape.select(out.logits, class)?;
    let grads = s.tape.backward(score)?;
    let g = grads.get(target)?.cast::<f64>();
    Heatmap::from_features(&s.tape.value(target).cast(), &g)
}

/// Writes the attention map as an 8-bit PGM, min-max scaled; a constant
/// map becomes a flat mid-grey image. With `upsample`, the map is resized
/// to the input extent.
pub fn export_attention<T: Real>(
    model: &Model<T>,
    sample: &RGBDSample,
    path: &Path,
    upsample: bool,
) -> Result<PnmImage> {
    let pred = model.predict(&sample.rgb.cast(), &sample.guidance.cast())?;
    let att = pred
        .attention
        .ok_or_else(|| Error::NoAttention(model.config().variant.to_string()))?;
    let m = att.extent();
    let mut t = att.weights.cast::<f64>().reshape(vec![m, m])?;
    if upsample {
        t = nearest(&t, sample.extent());
    }
    let side = t.shape()[0];
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let samples = t
        .data()
        .iter()
        .map(|&v| if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u16 } else { 128 })
        .collect();
    let img = PnmImage { width: side, height: side, channels: 1, maxval: 255, samples };
    img.write(path)?;
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_channel_is_proportional_to_relu() {
        let a = Tensor::new(vec![2, 2, 1], vec![-1.0, 0.0, 2.0, 4.0]).unwrap();
        let g = Tensor::full(vec![2, 2, 1], 0.5);
        let h = Heatmap::from_features(&a, &g).unwrap();
        assert_eq!(h.values.data(), &[0.0, 0.0, 0.5, 1.0]);
        assert_eq!(h.argmax(), (1, 1));
    }

    #[test]
    fn zero_gradient_gives_zero_map() {
        let a = Tensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let h = Heatmap::from_features(&a, &Tensor::zeros(vec![2, 2, 2])).unwrap();
        assert!(h.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upsample_is_nearest() {
        let h = Heatmap { values: Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.5, 0.25]).unwrap() };
        let u = h.upsample(4);
        assert_eq!(u.values.shape(), &[4, 4]);
        assert_eq!(&u.values.data()[..4], &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(u.values.data()[15], 0.25);
    }
}
