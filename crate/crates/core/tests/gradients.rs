//! Analytic gradients against central differences for random compositions
//! of tape ops, plus gradient-flow properties of the full model.

use dga::gradcheck::{random_inputs, rel_err};
use dga::model::{Model, ModelConfig, Phase, Variant};
use dga::nn::Session;
use dga::tensor::{Tape, Tensor, Var};
use dga::Result;
use proptest::prelude::*;

const EPS: f64 = 1e-5;
const FLOOR: f64 = 1e-5;

fn max_rel_err(leaves: &[Tensor<f64>], build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let eval = |ls: &[Tensor<f64>]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = ls.iter().map(|x| t.param(x.clone())).collect();
        let l = build(&mut t, &vs).unwrap();
        t.value(l).item()
    };
    let mut worst = 0.0f64;
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(vars[k]).unwrap();
        for i in 0..leaf.len() {
            let mut probe = leaves.to_vec();
            probe[k].data_mut()[i] += EPS;
            let up = eval(&probe);
            probe[k].data_mut()[i] -= 2.0 * EPS;
            let down = eval(&probe);
            let numeric = (up - down) / (2.0 * EPS);
            worst = worst.max(rel_err(analytic.data()[i], numeric, FLOOR));
        }
    }
    worst
}

fn tensor(shape: Vec<usize>, seed: u64, scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let data = (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            ((x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * scale
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // conv -> relu -> maxpool -> tanh -> weighted sum
    #[test]
    fn conv_pool_chain(h in 1usize..4, cin in 1usize..3, cout in 1usize..4, k in prop_oneof![Just(1usize), Just(3)], seed in any::<u64>()) {
        let side = 2 * h;
        let leaves = vec![
            tensor(vec![side, side, cin], seed, 1.0),
            tensor(vec![k, k, cin, cout], seed ^ 1, 0.7),
            tensor(vec![cout], seed ^ 2, 0.3),
            tensor(vec![h, h, cout], seed ^ 3, 1.0),
        ];
        let err = max_rel_err(&leaves, &|t, v| {
            let c = t.conv2d(v[0], v[1], v[2])?;
            let r = t.relu(c)?;
            let p = t.maxpool2d(r)?;
            let a = t.tanh(p)?;
            let w = t.mul(a, v[3])?;
            t.sum(w)
        });
        prop_assert!(err < 1e-4, "max rel err {err}");
    }

    // matmul -> softmax -> broadcast mul -> reductions -> select
    #[test]
    fn dense_softmax_chain(m in 1usize..5, k in 1usize..5, n in 2usize..6, axis in 0usize..2, pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let leaves = vec![
            tensor(vec![m, k], seed, 1.5),
            tensor(vec![k, n], seed ^ 5, 1.5),
            tensor(vec![m, 1], seed ^ 6, 1.0),
        ];
        let idx = pick.index(n);
        let err = max_rel_err(&leaves, &|t, v| {
            let y = t.matmul(v[0], v[1])?;
            let s = t.softmax(y, axis)?;
            let g = t.mul(s, v[2])?;
            let z = t.sum_axis(g, 0)?;
            let q = t.scale(z, 0.5)?;
            let e = t.sub(q, z)?;
            let f = t.add(e, z)?;
            t.select(f, idx)
        });
        prop_assert!(err < 1e-4, "max rel err {err}");
    }

    // avgpool -> concat -> reshape -> mean -> cross-entropy
    #[test]
    fn pool_concat_cross_entropy(w in 1usize..3, c1 in 1usize..3, c2 in 1usize..3, label in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let side = 2 * w;
        let leaves = vec![
            tensor(vec![side, side, c1], seed, 2.0),
            tensor(vec![w, w, c2], seed ^ 9, 2.0),
        ];
        let classes = w * w * (c1 + c2);
        let lab = label.index(classes.max(1));
        let err = max_rel_err(&leaves, &|t, v| {
            let a = t.avgpool2d(v[0], 2)?;
            let cat = t.concat_last(&[a, v[1]])?;
            let m = t.mean_axis(cat, 0)?;
            let b = t.mul(cat, m)?;
            let flat = t.reshape(b, vec![classes])?;
            t.cross_entropy(flat, lab)
        });
        prop_assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn softmax_sums_to_one(rows in 1usize..6, cols in 1usize..6, scale in 0.01f64..200.0, seed in any::<u64>()) {
        let mut t = Tape::new();
        let x = t.constant(tensor(vec![rows, cols], seed, scale));
        for axis in 0..2 {
            let s = t.softmax(x, axis).unwrap();
            let total = t.sum_axis(s, axis).unwrap();
            for v in t.value(total).data() {
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }
}

fn toy(variant: Variant) -> ModelConfig {
    ModelConfig::toy(variant, 5)
}

#[test]
fn every_parameter_receives_gradient() {
    for v in Variant::ALL {
        let cfg = toy(v);
        let model = Model::<f64>::new(cfg.clone()).unwrap();
        let (rgb, g, label) = random_inputs(&cfg, 3);
        let mut s = Session::new(model.params());
        let (_, parts) = model.loss(&mut s, &rgb, &g, label).unwrap();
        let grads = s.tape.backward(parts.total).unwrap();
        for (k, grad) in s.param_grads(&grads).unwrap().iter().enumerate() {
            let name = model.params().name(model.params().ids().nth(k).unwrap());
            // softmax over positions is shift invariant, so this bias never moves
            if name == "refine.score.bias" {
                assert!(grad.data().iter().all(|&x| x.abs() < 1e-12));
                continue;
            }
            assert!(grad.data().iter().any(|&x| x != 0.0), "{v}: {name} has zero gradient");
        }
    }
}

#[test]
fn attention_reacts_to_guidance_and_is_deterministic() {
    let cfg = toy(Variant::Proposed);
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let (rgb, g, _) = random_inputs(&cfg, 1);
    let (_, g2, _) = random_inputs(&cfg, 2);
    let att = |guid: &Tensor<f64>| {
        let mut s = Session::new(model.params());
        let out = model.forward_tensors(&mut s, &rgb, guid, Phase::Infer).unwrap();
        s.tape.value(out.attention.unwrap()).clone()
    };
    assert_eq!(att(&g), att(&g));
    assert!(att(&g).max_abs_diff(&att(&g2)) > 0.0);
}

#[test]
fn substituting_guidance_changes_no_shapes() {
    let cfg = toy(Variant::Proposed);
    let model = Model::<f32>::new(cfg.clone()).unwrap();
    let (rgb, depth, _) = random_inputs(&cfg, 4);
    let thermal = depth.map(|v| 1.0 - v * v);
    let shapes = |g: &Tensor<f64>| {
        let mut s = Session::new(model.params());
        let out = model.forward_tensors(&mut s, &rgb.cast(), &g.cast(), Phase::Train).unwrap();
        [out.f_rgb, out.f_guidance.unwrap(), out.pooled.unwrap(), out.attention.unwrap(), out.logits]
            .map(|v| s.tape.value(v).shape().to_vec())
    };
    assert_eq!(shapes(&depth), shapes(&thermal));
}

#[test]
fn guidance_features_concatenate_every_block() {
    let cfg = toy(Variant::Proposed);
    let model = Model::<f64>::new(cfg.clone()).unwrap();
    let (rgb, g, _) = random_inputs(&cfg, 5);
    let mut s = Session::new(model.params());
    let out = model.forward_tensors(&mut s, &rgb, &g, Phase::Infer).unwrap();
    let width: usize = cfg.backbone.block_widths.iter().sum();
    assert_eq!(s.tape.value(out.f_guidance.unwrap()).shape(), &[8, 8, width]);
}
