use super::{Initializer, ParamId, ParamStore, Parameterized, Session};
use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
    /// Softmax over the output features.
    Softmax,
}

/// Same-padded convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
}

impl Conv2dLayer {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        size: usize,
    ) -> Self {
        let fan_in = size * size * in_channels;
        let kernel = store.add(
            format!("{name}.kernel"),
            init.weights(vec![size, size, in_channels, out_channels], fan_in),
        );
        let bias = store.add(
            format!("{name}.bias"),
            crate::tensor::Tensor::zeros(vec![out_channels]),
        );
        Conv2dLayer {
            kernel,
            bias,
            in_channels,
            out_channels,
            size,
        }
    }

    pub fn param_count(in_channels: usize, out_channels: usize, size: usize) -> usize {
        size * size * in_channels * out_channels + out_channels
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let (k, b) = (s.param(self.kernel), s.param(self.bias));
        s.tape.conv2d(x, k, b)
    }
}

impl Parameterized for Conv2dLayer {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.kernel, self.bias]
    }
}

/// Shape description of one VGG block: `convs` 3×3 conv+ReLU layers with
/// `out_channels` filters, then a 2×2 max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub convs: usize,
}

impl ConvBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 {
            return Err(Error::Config("conv block needs at least one channel".into()));
        }
        if !(1..=3).contains(&self.convs) {
            return Err(Error::Config(format!(
                "conv block needs 1-3 convolutions, got {}",
                self.convs
            )));
        }
        Ok(())
    }

    pub fn param_count(&self, in_channels: usize) -> usize {
        (0..self.convs)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { self.out_channels };
                Conv2dLayer::param_count(cin, self.out_channels, 3)
            })
            .sum()
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        if input[0] % 2 != 0 || input[1] % 2 != 0 {
            return Err(Error::OddExtent {
                height: input[0],
                width: input[1],
            });
        }
        Ok([input[0] / 2, input[1] / 2, self.out_channels])
    }
}

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub spec: ConvBlockSpec,
    pub convs: Vec<Conv2dLayer>,
}

impl ConvBlock {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        spec: ConvBlockSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let convs = (0..spec.convs)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { spec.out_channels };
                Conv2dLayer::build(
                    store,
                    init,
                    &format!("{name}.conv{}", i + 1),
                    cin,
                    spec.out_channels,
                    3,
                )
            })
            .collect();
        Ok(ConvBlock { spec, convs })
    }

    /// `H×W×Cin → H/2×W/2×out_channels`.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, mut x: Var) -> Result<Var> {
        for conv in &self.convs {
            x = conv.forward(s, x)?;
            x = s.tape.relu(x)?;
        }
        s.tape.maxpool2d(x)
    }
}

impl Parameterized for ConvBlock {
    fn param_ids(&self) -> Vec<ParamId> {
        self.convs.iter().flat_map(|c| c.param_ids()).collect()
    }
}

/// `y = act(x·W + b)` along the last axis; leading axes are kept.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init.weights(vec![inputs, outputs], inputs),
        );
        let bias = store.add(
            format!("{name}.bias"),
            crate::tensor::Tensor::zeros(vec![outputs]),
        );
        Dense {
            weight,
            bias,
            inputs,
            outputs,
            activation,
        }
    }

    pub fn param_count(inputs: usize, outputs: usize) -> usize {
        inputs * outputs + outputs
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Result<Var> {
        let shape = s.tape.value(x).shape().to_vec();
        if shape.last() != Some(&self.inputs) {
            return Err(Error::ShapeMismatch {
                op: "dense",
                left: shape,
                right: vec![self.inputs, self.outputs],
            });
        }
        let rows = shape[..shape.len() - 1].iter().product();
        let flat = s.tape.reshape(x, vec![rows, self.inputs])?;
        let (w, b) = (s.param(self.weight), s.param(self.bias));
        let y = s.tape.matmul(flat, w)?;
        let y = s.tape.add(y, b)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.outputs;
        let y = s.tape.reshape(y, out_shape)?;
        match self.activation {
            Activation::None => Ok(y),
            Activation::Relu => s.tape.relu(y),
            Activation::Tanh => s.tape.tanh(y),
            Activation::Softmax => {
                let axis = s.tape.value(y).rank() - 1;
                s.tape.softmax(y, axis)
            }
        }
    }
}

impl Parameterized for Dense {
    fn param_ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{InitScheme, InitSpec};
    use crate::tensor::Tensor;

    fn init(seed: u64) -> Initializer {
        Initializer::new(InitSpec {
            scheme: InitScheme::UniformFanIn,
            seed,
        })
    }

    #[test]
    fn dense_zero_weight_outputs_bias() {
        let mut store = ParamStore::<f64>::new();
        let d = Dense::build(&mut store, &mut init(0), "d", 3, 2, Activation::None);
        *store.get_mut(d.weight) = Tensor::zeros(vec![3, 2]);
        *store.get_mut(d.bias) = Tensor::from_f64(vec![2], &[0.5, -1.0]).unwrap();
        let mut s = Session::new(&store);
        let x = s.input(Tensor::full(vec![2, 2, 3], 0.3));
        let y = d.forward(&mut s, x).unwrap();
        let v = s.tape.value(y);
        assert_eq!(v.shape(), &[2, 2, 2]);
        assert_eq!(v.data(), &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn dense_hand_computed() {
        let mut store = ParamStore::<f64>::new();
        let d = Dense::build(&mut store, &mut init(0), "d", 2, 2, Activation::None);
        *store.get_mut(d.weight) = Tensor::from_f64(vec![2, 2], &[1., 2., 3., 4.]).unwrap();
        *store.get_mut(d.bias) = Tensor::from_f64(vec![2], &[0.5, 0.25]).unwrap();
        let mut s = Session::new(&store);
        let x = s.input(Tensor::from_f64(vec![1, 2], &[1.0, -1.0]).unwrap());
        let y = d.forward(&mut s, x).unwrap();
        // [1,-1]·[[1,2],[3,4]] = [-2,-2], plus bias
        assert_eq!(s.tape.value(y).data(), &[-1.5, -1.75]);
    }

    #[test]
    fn dense_spatial_shape_and_count() {
        let mut store = ParamStore::<f32>::new();
        let d = Dense::build(&mut store, &mut init(1), "sl", 64, 256, Activation::Tanh);
        assert_eq!(d.count_params(&store), 16_640);
        assert_eq!(Dense::param_count(64, 256), 16_640);
        let mut s = Session::new(&store);
        let x = s.input(Tensor::zeros(vec![7, 7, 64]));
        let y = d.forward(&mut s, x).unwrap();
        assert_eq!(s.tape.value(y).shape(), &[7, 7, 256]);
        let bad = s.input(Tensor::zeros(vec![7, 7, 63]));
        assert!(matches!(
            d.forward(&mut s, bad),
            Err(Error::ShapeMismatch { op: "dense", .. })
        ));
    }

    #[test]
    fn toy_block_geometry_and_determinism() {
        let spec = ConvBlockSpec {
            out_channels: 8,
            convs: 1,
        };
        let mut a = ParamStore::<f32>::new();
        let block = ConvBlock::build(&mut a, &mut init(9), "b1", 3, spec).unwrap();
        let mut b = ParamStore::<f32>::new();
        ConvBlock::build(&mut b, &mut init(9), "b1", 3, spec).unwrap();
        assert_eq!(a.tensors(), b.tensors());
        let mut s = Session::new(&a);
        let x = s.input(Tensor::full(vec![64, 64, 3], 0.5));
        let y = block.forward(&mut s, x).unwrap();
        assert_eq!(s.tape.value(y).shape(), &[32, 32, 8]);
        assert_eq!(spec.output_shape([64, 64, 3]).unwrap(), [32, 32, 8]);
    }

    #[test]
    fn block_rejects_zero_channels() {
        let mut store = ParamStore::<f32>::new();
        let spec = ConvBlockSpec {
            out_channels: 0,
            convs: 2,
        };
        assert!(ConvBlock::build(&mut store, &mut init(0), "b", 3, spec).is_err());
    }

    #[test]
    fn vgg16_stack_count() {
        let widths = [64, 128, 256, 512, 512];
        let convs = [2, 2, 3, 3, 3];
        let mut cin = 3;
        let mut total = 0;
        for (&w, &c) in widths.iter().zip(&convs) {
            let spec = ConvBlockSpec {
                out_channels: w,
                convs: c,
            };
            total += spec.param_count(cin);
            cin = w;
        }
        assert_eq!(total, 14_714_688);
    }
}
