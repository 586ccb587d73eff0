//! Adam, the per-epoch learning-rate decay and the mini-batch training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::RGBDSample;
use crate::error::{Error, Result};
use crate::model::{LossValues, Model, ModelConfig};
use crate::nn::Session;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0, beta1, beta2, eps }
    }

    pub fn standard(params: &[Tensor<T>]) -> Self {
        Self::new(params, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            left: vec![params.len(), state.m.len()],
            right: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i].as_f64();
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            p[i] = T::from_f64(p[i].as_f64() - step);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-5,
            decay: 0.9,
            batch_size: 30,
            epochs: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * cfg.decay.powi(epoch as i32)
}

/// Epoch means of the loss terms and the training accuracy measured after
/// the epoch's last step.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_rgb: Option<f64>,
    pub loss_guidance: Option<f64>,
    pub loss_attention: f64,
    pub train_acc: f64,
}

pub const METRICS_HEADER: &str = "epoch,lr,loss_total,loss_rgb,loss_guidance,loss_attention,train_acc";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.lr,
            r.loss_total,
            opt(r.loss_rgb),
            opt(r.loss_guidance),
            r.loss_attention,
            r.train_acc
        );
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Loss values and parameter gradients of one sample.
fn sample_grads<T: Real>(
    model: &Model<T>,
    rgb: &Tensor<T>,
    guidance: &Tensor<T>,
    label: usize,
) -> Result<(LossValues, Vec<Tensor<T>>)> {
    let mut s = Session::new(model.params());
    let (_, parts) = model.loss(&mut s, rgb, guidance, label)?;
    let values = parts.values(&s.tape);
    let grads = s.tape.backward(parts.total)?;
    Ok((values, s.param_grads(&grads)?))
}

/// Batch-mean loss gradient; per-sample results are summed in sample order
/// so the result does not depend on the thread count.
pub fn batch_grads<T: Real>(
    model: &Model<T>,
    batch: &[(Tensor<T>, Tensor<T>, usize)],
) -> Result<(Vec<LossValues>, Vec<Tensor<T>>)> {
    let per: Vec<(LossValues, Vec<Tensor<T>>)> = batch
        .par_iter()
        .map(|(r, g, l)| sample_grads(model, r, g, *l))
        .collect::<Result<_>>()?;
    let mut sum: Vec<Tensor<T>> = model
        .params()
        .tensors()
        .iter()
        .map(|p| Tensor::zeros(p.shape().to_vec()))
        .collect();
    let mut losses = Vec::with_capacity(per.len());
    for (values, grads) in per {
        losses.push(values);
        for (acc, g) in sum.iter_mut().zip(&grads) {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    let inv = T::from_f64(1.0 / batch.len() as f64);
    for acc in &mut sum {
        acc.data_mut().iter_mut().for_each(|a| *a = *a * inv);
    }
    Ok((losses, sum))
}

/// Fraction of samples whose main-head argmax equals the label.
pub fn accuracy<T: Real>(model: &Model<T>, samples: &[(Tensor<T>, Tensor<T>, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = samples
        .par_iter()
        .map(|(r, g, l)| Ok(usize::from(model.predict(r, g)?.argmax() == *l)))
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / samples.len() as f64)
}

pub(crate) fn to_tensors<T: Real>(samples: &[RGBDSample]) -> Vec<(Tensor<T>, Tensor<T>, usize)> {
    samples
        .iter()
        .map(|s| (s.rgb.cast(), s.guidance.cast(), s.identity))
        .collect()
}

/// Trains `model` in place on `samples`; `on_epoch` sees each epoch's
/// metrics as soon as they are known.
pub fn train<T: Real>(
    model: &mut Model<T>,
    samples: &[RGBDSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = model.num_classes();
    if let Some(bad) = samples.iter().find(|s| s.identity >= classes) {
        return Err(Error::LabelOutOfRange { label: bad.identity, classes });
    }
    let data = to_tensors::<T>(samples);
    let mut state = AdamState::new(model.params().tensors(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(cfg, epoch);
        order.shuffle(&mut rng);
        let mut sums = LossValues::default();
        let (mut rgb_sum, mut guid_sum) = (0.0, 0.0);
        let mut has_aux = false;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (losses, grads) = batch_grads(model, &batch)?;
            for l in &losses {
                sums.total += l.total;
                sums.attention += l.attention;
                if let (Some(r), Some(g)) = (l.rgb, l.guidance) {
                    has_aux = true;
                    rgb_sum += r;
                    guid_sum += g;
                }
            }
            if losses.iter().any(|l| !l.total.is_finite()) {
                return Err(Error::Config(format!("non-finite loss in epoch {epoch}")));
            }
            adam_step(&mut state, model.params_mut().tensors_mut(), &grads, lr)?;
        }
        let n = data.len() as f64;
        let m = EpochMetrics {
            epoch,
            lr,
            loss_total: sums.total / n,
            loss_rgb: has_aux.then_some(rgb_sum / n),
            loss_guidance: has_aux.then_some(guid_sum / n),
            loss_attention: sums.attention / n,
            train_acc: accuracy(model, &data)?,
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}

/// Builds a fresh model from `model_cfg` and trains it.
pub fn train_new(
    model_cfg: ModelConfig,
    samples: &[RGBDSample],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Model<f32>, Vec<EpochMetrics>)> {
    let mut model = Model::<f32>::new(model_cfg)?;
    let metrics = train(&mut model, samples, cfg, on_epoch)?;
    Ok((model, metrics))
}

/// Sizes rayon's global pool from `DGA_THREADS` when set. Has no effect
/// once the pool exists.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("DGA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("DGA_THREADS must be a positive integer, got `{v}`")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
