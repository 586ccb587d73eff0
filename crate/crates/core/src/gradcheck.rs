//! Central finite-difference check of every parameter gradient of the
//! total loss, in f64.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::nn::{ParamId, Session};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub eps: f64,
    pub seed: u64,
    /// Tensors up to this size are checked entry by entry; larger ones
    /// are sampled down to it.
    pub max_entries: usize,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { eps: 1e-5, seed: 0, max_entries: 48, floor: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub total: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub loss: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn total_loss(model: &Model<f64>, rgb: &Tensor<f64>, guidance: &Tensor<f64>, label: usize) -> Result<f64> {
    let mut s = Session::new(model.params());
    let (_, parts) = model.loss(&mut s, rgb, guidance, label)?;
    Ok(s.tape.value(parts.total).item())
}

/// Random uniform inputs for `cfg` plus a label, from `seed`.
pub fn random_inputs(cfg: &ModelConfig, seed: u64) -> (Tensor<f64>, Tensor<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.backbone.input_extent;
    let mut fill = |n: usize| (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
    let rgb = Tensor::new(vec![h, h, cfg.backbone.rgb_channels], fill(h * h * cfg.backbone.rgb_channels)).unwrap();
    let guidance = Tensor::new(vec![h, h, 1], fill(h * h)).unwrap();
    let label = rng.gen_range(0..cfg.num_classes);
    (rgb, guidance, label)
}

/// Compares analytic and central-difference gradients of the total loss
/// for a freshly initialized model on random inputs.
pub fn gradcheck(cfg: &ModelConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let model = Model::<f64>::new(cfg.clone())?;
    let (rgb, guidance, label) = random_inputs(cfg, opts.seed);
    let mut s = Session::new(model.params());
    let (_, parts) = model.loss(&mut s, &rgb, &guidance, label)?;
    let loss = s.tape.value(parts.total).item();
    let grads = s.tape.backward(parts.total)?;
    let analytic = s.param_grads(&grads)?;
    drop(s);
    let ids: Vec<ParamId> = model.params().ids().collect();
    let params = ids
        .par_iter()
        .map(|&id| {
            let total = model.params().get(id).len();
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (id.index() as u64).wrapping_mul(0x9e37_79b9));
            let picks: Vec<usize> = if total <= opts.max_entries {
                (0..total).collect()
            } else {
                let mut v = sample(&mut rng, total, opts.max_entries).into_vec();
                v.sort_unstable();
                v
            };
            let mut probe = model.clone();
            let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
            for &i in &picks {
                let orig = probe.params().get(id).data()[i];
                probe.params_mut().get_mut(id).data_mut()[i] = orig + opts.eps;
                let up = total_loss(&probe, &rgb, &guidance, label)?;
                probe.params_mut().get_mut(id).data_mut()[i] = orig - opts.eps;
                let down = total_loss(&probe, &rgb, &guidance, label)?;
                probe.params_mut().get_mut(id).data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * opts.eps);
                let a = analytic[id.index()].data()[i];
                max_abs = max_abs.max((a - numeric).abs());
                max_rel = max_rel.max(rel_err(a, numeric, opts.floor));
            }
            Ok(ParamCheck {
                name: model.params().name(id).to_string(),
                checked: picks.len(),
                total,
                max_rel_err: max_rel,
                max_abs_err: max_abs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport { params, loss })
}
