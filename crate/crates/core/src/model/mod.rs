//! The full network for every ablation variant, its losses, and checkpoints.

mod checkpoint;
mod config;

pub use config::{ModelConfig, Variant};

use crate::attention::{AttentionMap, FeaturePooling, PoolingMode, Refinement};
use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::nn::{
    Activation, Dense, Initializer, ParamId, ParamStore, Parameterized, Session,
};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Whether auxiliary branches are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// Tape handles for everything a forward pass produces.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    pub aux_rgb_logits: Option<Var>,
    pub aux_guidance_logits: Option<Var>,
    pub attention: Option<Var>,
    /// Pre-logit feature vector.
    pub embedding: Var,
    pub f_rgb: Var,
    pub f_guidance: Option<Var>,
    pub pooled: Option<Var>,
}

/// Flattened stream features → hidden (tanh) → class scores.
#[derive(Clone, Debug)]
pub struct AuxBranch {
    pub hidden: Dense,
    pub out: Dense,
}

impl AuxBranch {
    fn build<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        inputs: usize,
        hidden: usize,
        classes: usize,
    ) -> Self {
        AuxBranch {
            hidden: Dense::build(
                store,
                init,
                &format!("{name}.fc1"),
                inputs,
                hidden,
                Activation::Tanh,
            ),
            out: Dense::build(
                store,
                init,
                &format!("{name}.fc2"),
                hidden,
                classes,
                Activation::None,
            ),
        }
    }

    pub fn param_count(inputs: usize, hidden: usize, classes: usize) -> usize {
        Dense::param_count(inputs, hidden) + Dense::param_count(hidden, classes)
    }

    /// Flattens an `M×M×c` map and scores it.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, feature_map: Var) -> Result<Var> {
        let n = s.tape.value(feature_map).len();
        let flat = s.tape.reshape(feature_map, vec![n])?;
        let h = self.hidden.forward(s, flat)?;
        self.out.forward(s, h)
    }
}

impl Parameterized for AuxBranch {
    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.hidden.param_ids();
        ids.extend(self.out.param_ids());
        ids
    }
}

/// Attention-weighted sum over positions: `Σ_p α_p · F[p, :]`.
pub fn attend<T: Real>(tape: &mut Tape<T>, features: Var, alpha: Var) -> Result<Var> {
    let weighted = tape.mul(features, alpha)?;
    let s = tape.value(weighted).shape().to_vec();
    let flat = tape.reshape(weighted, vec![s[0] * s[1], s[2]])?;
    tape.sum_axis(flat, 0)
}

fn spatial_mean<T: Real>(tape: &mut Tape<T>, map: Var) -> Result<Var> {
    let s = tape.value(map).shape().to_vec();
    let flat = tape.reshape(map, vec![s[0] * s[1], s[2]])?;
    tape.mean_axis(flat, 0)
}

/// Input width of the main classifier head.
fn head_input_width(cfg: &ModelConfig) -> usize {
    let b = &cfg.backbone;
    match cfg.variant {
        Variant::Baseline | Variant::ModelD | Variant::Proposed => b.rgb_width(),
        Variant::ModelA | Variant::CrossModal => b.rgb_width() + b.guidance_width(),
        Variant::ModelB | Variant::ModelC => cfg.pooling.channels,
    }
}

// (inputs, outputs, activation) per head layer; the embedding is the input
// of the last layer.
fn head_layout(cfg: &ModelConfig) -> Vec<(usize, usize, Activation)> {
    let (inp, n, m) = (head_input_width(cfg), cfg.classifier_hidden, cfg.num_classes);
    match cfg.variant {
        Variant::ModelA => vec![
            (inp, n, Activation::Tanh),
            (n, n, Activation::Tanh),
            (n, m, Activation::None),
        ],
        Variant::CrossModal => vec![(inp, m, Activation::None)],
        _ => vec![(inp, n, Activation::None), (n, m, Activation::None)],
    }
}

/// Exact parameter count of the network `cfg` describes, computed without
/// allocating it.
pub fn count_model_params(cfg: &ModelConfig) -> usize {
    let b = &cfg.backbone;
    let mut n = b.stream_param_count(b.rgb_channels);
    if cfg.variant.uses_guidance() {
        n += b.stream_param_count(b.guidance_channels);
    }
    if cfg.variant.has_pooling() {
        n += FeaturePooling::param_count(&cfg.pooling, b.rgb_width(), b.guidance_width());
    }
    if cfg.variant.has_attention() {
        n += Refinement::param_count(&cfg.pooling);
    }
    n += head_layout(cfg)
        .iter()
        .map(|&(i, o, _)| Dense::param_count(i, o))
        .sum::<usize>();
    if cfg.modality_loss {
        n += aux_param_counts(cfg).iter().sum::<usize>();
    }
    n
}

/// Parameter counts of the RGB and guidance auxiliary branches.
pub fn aux_param_counts(cfg: &ModelConfig) -> [usize; 2] {
    let b = &cfg.backbone;
    let area = b.feature_extent() * b.feature_extent();
    [
        AuxBranch::param_count(area * b.rgb_width(), cfg.aux_hidden, cfg.num_classes),
        AuxBranch::param_count(area * b.guidance_width(), cfg.aux_hidden, cfg.num_classes),
    ]
}

/// Tensor shapes of every intermediate map, derived from the configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeReport {
    pub f_rgb: [usize; 3],
    pub f_guidance: [usize; 3],
    pub pooled: [usize; 3],
    pub attention: [usize; 3],
    pub logits: usize,
}

pub fn infer_shapes(cfg: &ModelConfig) -> Result<ShapeReport> {
    cfg.validate()?;
    let b = &cfg.backbone;
    let mut shape = [b.input_extent, b.input_extent, b.rgb_channels];
    for spec in b.specs() {
        shape = spec.output_shape(shape)?;
    }
    let m = shape[0];
    Ok(ShapeReport {
        f_rgb: shape,
        f_guidance: [m, m, b.guidance_width()],
        pooled: [m, m, cfg.pooling.channels],
        attention: [m, m, 1],
        logits: cfg.num_classes,
    })
}

/// Plain-value results of an inference pass.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub logits: Vec<f64>,
    pub embedding: Vec<f64>,
    pub attention: Option<AttentionMap<T>>,
}

impl<T> Prediction<T> {
    /// Index of the largest logit; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Loss handles on the tape; absent components are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub rgb: Option<Var>,
    pub guidance: Option<Var>,
    /// Loss of the main head.
    pub attention: Var,
}

/// Loss values of one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub rgb: Option<f64>,
    pub guidance: Option<f64>,
    pub attention: f64,
}

impl LossParts {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossValues {
        let v = |x: Var| tape.value(x).item().as_f64();
        LossValues {
            total: v(self.total),
            rgb: self.rgb.map(v),
            guidance: self.guidance.map(v),
            attention: v(self.attention),
        }
    }
}

/// Which auxiliary head a modality loss reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Rgb,
    Guidance,
}

/// Cross-entropy of an auxiliary branch.
pub fn loss_identity<T: Real>(
    tape: &mut Tape<T>,
    out: &ForwardOutput,
    label: usize,
    which: Modality,
) -> Result<Var> {
    let logits = match which {
        Modality::Rgb => out.aux_rgb_logits.ok_or(Error::MissingComponent("loss_rgb"))?,
        Modality::Guidance => out
            .aux_guidance_logits
            .ok_or(Error::MissingComponent("loss_guidance"))?,
    };
    tape.cross_entropy(logits, label)
}

/// Cross-entropy of the main head.
pub fn loss_attention<T: Real>(tape: &mut Tape<T>, out: &ForwardOutput, label: usize) -> Result<Var> {
    tape.cross_entropy(out.logits, label)
}

/// Sum of the modality losses and the main loss when `modality_loss` is
/// set, otherwise the main loss alone.
pub fn loss_total<T: Real>(
    tape: &mut Tape<T>,
    out: &ForwardOutput,
    label: usize,
    modality_loss: bool,
) -> Result<LossParts> {
    let attention = loss_attention(tape, out, label)?;
    if !modality_loss {
        return Ok(LossParts {
            total: attention,
            rgb: None,
            guidance: None,
            attention,
        });
    }
    let rgb = loss_identity(tape, out, label, Modality::Rgb)?;
    let guidance = loss_identity(tape, out, label, Modality::Guidance)?;
    let partial = tape.add(rgb, guidance)?;
    let total = tape.add(partial, attention)?;
    Ok(LossParts {
        total,
        rgb: Some(rgb),
        guidance: Some(guidance),
        attention,
    })
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    cfg: ModelConfig,
    params: ParamStore<T>,
    backbone: Backbone,
    pooling: Option<FeaturePooling>,
    refinement: Option<Refinement>,
    head: Vec<Dense>,
    aux_rgb: Option<AuxBranch>,
    aux_guidance: Option<AuxBranch>,
}

impl<T: Real> Model<T> {
    /// Builds and randomly initializes the network; layers are initialized
    /// in a fixed order so the same config yields identical parameters.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(cfg.init);
        let v = cfg.variant;
        let b = &cfg.backbone;
        let backbone = Backbone::build(&mut params, &mut init, b, v.uses_guidance())?;
        let pooling = v.has_pooling().then(|| {
            FeaturePooling::build(
                &mut params,
                &mut init,
                &cfg.pooling,
                b.rgb_width(),
                b.guidance_width(),
            )
        });
        let refinement = v
            .has_attention()
            .then(|| Refinement::build(&mut params, &mut init, &cfg.pooling));
        let head = head_layout(&cfg)
            .into_iter()
            .enumerate()
            .map(|(i, (inp, out, act))| {
                Dense::build(
                    &mut params,
                    &mut init,
                    &format!("head.fc{}", i + 1),
                    inp,
                    out,
                    act,
                )
            })
            .collect();
        let (aux_rgb, aux_guidance) = if cfg.modality_loss {
            let area = b.feature_extent() * b.feature_extent();
            (
                Some(AuxBranch::build(
                    &mut params,
                    &mut init,
                    "aux_rgb",
                    area * b.rgb_width(),
                    cfg.aux_hidden,
                    cfg.num_classes,
                )),
                Some(AuxBranch::build(
                    &mut params,
                    &mut init,
                    "aux_guidance",
                    area * b.guidance_width(),
                    cfg.aux_hidden,
                    cfg.num_classes,
                )),
            )
        } else {
            (None, None)
        };
        Ok(Model {
            cfg,
            params,
            backbone,
            pooling,
            refinement,
            head,
            aux_rgb,
            aux_guidance,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn pooling(&self) -> Option<&FeaturePooling> {
        self.pooling.as_ref()
    }

    pub fn refinement(&self) -> Option<&Refinement> {
        self.refinement.as_ref()
    }

    pub fn aux_branches(&self) -> (Option<&AuxBranch>, Option<&AuxBranch>) {
        (self.aux_rgb.as_ref(), self.aux_guidance.as_ref())
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.num_classes
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            backbone: self.backbone.clone(),
            pooling: self.pooling.clone(),
            refinement: self.refinement.clone(),
            head: self.head.clone(),
            aux_rgb: self.aux_rgb.clone(),
            aux_guidance: self.aux_guidance.clone(),
        }
    }

    /// Runs the network for one sample on `s`. `rgb` is `H×H×3`, `guidance`
    /// is `H×H×g`; the guidance raster is ignored by the baseline.
    pub fn forward(
        &self,
        s: &mut Session<T>,
        rgb: Var,
        guidance: Var,
        phase: Phase,
    ) -> Result<ForwardOutput> {
        let v = self.cfg.variant;
        let f_rgb = self.backbone.extract_rgb(s, rgb)?;
        let f_guidance = if v.uses_guidance() {
            Some(self.backbone.extract_guidance(s, guidance)?)
        } else {
            None
        };
        let pooled = match (&self.pooling, f_guidance) {
            (Some(p), Some(fg)) => Some(p.forward(s, f_rgb, fg)?),
            _ => None,
        };
        let attention = match (&self.refinement, pooled) {
            (Some(r), Some(p)) => Some(r.refine(s, p)?),
            _ => None,
        };
        let head_input = match v {
            Variant::Baseline => spatial_mean(&mut s.tape, f_rgb)?,
            Variant::ModelA => {
                let a = spatial_mean(&mut s.tape, f_rgb)?;
                let g = spatial_mean(&mut s.tape, f_guidance.expect("guidance stream"))?;
                s.tape.concat_last(&[a, g])?
            }
            Variant::ModelB | Variant::ModelC => {
                spatial_mean(&mut s.tape, pooled.expect("pooling"))?
            }
            Variant::ModelD | Variant::Proposed => {
                attend(&mut s.tape, f_rgb, attention.expect("attention"))?
            }
            Variant::CrossModal => {
                let alpha = attention.expect("attention");
                let a = attend(&mut s.tape, f_rgb, alpha)?;
                let g = attend(&mut s.tape, f_guidance.expect("guidance stream"), alpha)?;
                s.tape.concat_last(&[a, g])?
            }
        };
        let mut x = head_input;
        let mut embedding = head_input;
        for (i, layer) in self.head.iter().enumerate() {
            if i + 1 == self.head.len() {
                embedding = x;
            }
            x = layer.forward(s, x)?;
        }
        let (mut aux_rgb_logits, mut aux_guidance_logits) = (None, None);
        if phase == Phase::Train {
            if let (Some(ar), Some(ag), Some(fg)) = (&self.aux_rgb, &self.aux_guidance, f_guidance)
            {
                aux_rgb_logits = Some(ar.forward(s, f_rgb)?);
                aux_guidance_logits = Some(ag.forward(s, fg)?);
            }
        }
        Ok(ForwardOutput {
            logits: x,
            aux_rgb_logits,
            aux_guidance_logits,
            attention,
            embedding,
            f_rgb,
            f_guidance,
            pooled,
        })
    }

    /// Records both rasters as constants and runs [`Model::forward`].
    pub fn forward_tensors(
        &self,
        s: &mut Session<T>,
        rgb: &Tensor<T>,
        guidance: &Tensor<T>,
        phase: Phase,
    ) -> Result<ForwardOutput> {
        let r = s.input(rgb.clone());
        let g = s.input(guidance.clone());
        self.forward(s, r, g, phase)
    }

    /// Loss of one labeled sample, recorded on `s`.
    pub fn loss(
        &self,
        s: &mut Session<T>,
        rgb: &Tensor<T>,
        guidance: &Tensor<T>,
        label: usize,
    ) -> Result<(ForwardOutput, LossParts)> {
        if label >= self.cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.cfg.num_classes,
            });
        }
        let out = self.forward_tensors(s, rgb, guidance, Phase::Train)?;
        let parts = loss_total(&mut s.tape, &out, label, self.cfg.modality_loss)?;
        Ok((out, parts))
    }

    pub fn predict(&self, rgb: &Tensor<T>, guidance: &Tensor<T>) -> Result<Prediction<T>> {
        let mut s = Session::new(&self.params);
        let out = self.forward_tensors(&mut s, rgb, guidance, Phase::Infer)?;
        Ok(Prediction {
            logits: s.tape.value(out.logits).to_f64_vec(),
            embedding: s.tape.value(out.embedding).to_f64_vec(),
            attention: out.attention.map(|a| AttentionMap {
                weights: s.tape.value(a).clone(),
            }),
        })
    }

    pub fn pooling_mode(&self) -> Option<PoolingMode> {
        self.pooling.as_ref().map(|p| p.mode)
    }
}

impl<T: Real> Parameterized for Model<T> {
    fn param_ids(&self) -> Vec<ParamId> {
        self.params.ids().collect()
    }
}
