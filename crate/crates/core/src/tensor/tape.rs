use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvGeom};
use super::{broadcast_index, Real, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Elementwise {
        kind: Binary,
        a: usize,
        b: usize,
        // broadcast map from output index to b index; None when shapes match
        b_map: Option<Vec<usize>>,
    },
    Scale(usize, f64),
    MatMul(usize, usize),
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        geom: ConvGeom,
    },
    MaxPool2d {
        input: usize,
        argmax: Vec<usize>,
    },
    AvgPool2d {
        input: usize,
        window: usize,
    },
    Relu(usize),
    Tanh(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    Reshape(usize),
    SumAxis {
        input: usize,
        axis: usize,
    },
    SumAll(usize),
    ConcatLast(Vec<usize>),
    Select {
        input: usize,
        index: usize,
    },
    CrossEntropy {
        logits: usize,
        label: usize,
        // softmax of the logits
        probs: Vec<f64>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of operations for reverse-mode differentiation.
///
/// Confined to the thread that owns it; build one tape per forward pass.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            index: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Records a leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a constant leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        &self.nodes[v.index].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn elementwise(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let b_map = if av.shape() == bv.shape() {
            None
        } else {
            Some(
                broadcast_index(av.shape(), bv.shape()).ok_or_else(|| Error::ShapeMismatch {
                    op: "elementwise",
                    left: av.shape().to_vec(),
                    right: bv.shape().to_vec(),
                })?,
            )
        };
        let (x, y) = (av.data(), bv.data());
        let f = |p: T, q: T| match kind {
            Binary::Add => p + q,
            Binary::Sub => p - q,
            Binary::Mul => p * q,
        };
        let out: Vec<T> = match &b_map {
            None => x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect(),
            Some(map) => x.iter().zip(map).map(|(&p, &j)| f(p, y[j])).collect(),
        };
        let value = Tensor::new(av.shape().to_vec(), out)?;
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(
            value,
            Op::Elementwise {
                kind,
                a: ai,
                b: bi,
                b_map,
            },
            rg,
        ))
    }

    /// `a + b`, with `b` broadcast over `a` (right-aligned, unit extents stretch).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ai = self.idx(a)?;
        let s = T::from_f64(factor);
        let value = self.nodes[ai].value.map(|v| v * s);
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Scale(ai, factor), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = Tensor::new(vec![m, n], kernels::matmul(av.data(), bv.data(), m, k, n))?;
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(value, Op::MatMul(ai, bi), rg))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (ii, ki, bi) = (self.idx(input)?, self.idx(kernel)?, self.idx(bias)?);
        let (iv, kv, bv) = (
            &self.nodes[ii].value,
            &self.nodes[ki].value,
            &self.nodes[bi].value,
        );
        let geom = ConvGeom::check(iv, kv, bv)?;
        let value = kernels::conv2d_forward(iv, kv, bv)?;
        let rg = self.rg(ii) || self.rg(ki) || self.rg(bi);
        Ok(self.push(
            value,
            Op::Conv2d {
                input: ii,
                kernel: ki,
                bias: bi,
                geom,
            },
            rg,
        ))
    }

    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let ii = self.idx(input)?;
        let (value, argmax) = kernels::maxpool2d_forward(&self.nodes[ii].value)?;
        let rg = self.rg(ii);
        Ok(self.push(value, Op::MaxPool2d { input: ii, argmax }, rg))
    }

    /// Non-overlapping average pool with a square `window`.
    pub fn avgpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let ii = self.idx(input)?;
        let value = kernels::avgpool2d_forward(&self.nodes[ii].value, window)?;
        let rg = self.rg(ii);
        Ok(self.push(value, Op::AvgPool2d { input: ii, window }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.map(|v| v.max(T::zero()));
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Relu(ai), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.map(|v| v.tanh());
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Tanh(ai), rg))
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let av = &self.nodes[ai].value;
        if axis >= av.rank() {
            return Err(Error::InvalidAxis {
                op: "softmax",
                axis,
                shape: av.shape().to_vec(),
            });
        }
        let (outer, n, inner) = axis_split(av.shape(), axis);
        let x = av.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for j in 0..n {
                    let e = (x[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let value = Tensor::new(av.shape().to_vec(), out)?;
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Softmax { input: ai, axis }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.reshape(shape)?;
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Reshape(ai), rg))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let av = &self.nodes[ai].value;
        if axis >= av.rank() {
            return Err(Error::InvalidAxis {
                op: "sum_axis",
                axis,
                shape: av.shape().to_vec(),
            });
        }
        let (outer, n, inner) = axis_split(av.shape(), axis);
        let x = av.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &x[(o * n + j) * inner..][..inner];
                for (acc, &v) in out[o * inner..][..inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut shape = av.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(ai);
        Ok(self.push(value, Op::SumAxis { input: ai, axis }, rg))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self
            .value(a)
            .shape()
            .get(axis)
            .copied()
            .ok_or_else(|| Error::InvalidAxis {
                op: "mean_axis",
                axis,
                shape: self.value(a).shape().to_vec(),
            })?;
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = Tensor::scalar(self.nodes[ai].value.sum());
        let rg = self.rg(ai);
        Ok(self.push(value, Op::SumAll(ai), rg))
    }

    /// Concatenates along the last axis; all other extents must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect::<Result<_>>()?;
        let Some(&first) = idx.first() else {
            return Err(Error::Config("concat of zero tensors".into()));
        };
        let lead = {
            let s = self.nodes[first].value.shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(idx.len());
        for &i in &idx {
            let s = self.nodes[i].value.shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: self.nodes[first].value.shape().to_vec(),
                    right: s.to_vec(),
                });
            }
            widths.push(s[s.len() - 1]);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&i, &w) in idx.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[i].value.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(value, Op::ConcatLast(idx), rg))
    }

    /// Picks one element by flat index as a rank-0 tensor.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let av = &self.nodes[ai].value;
        if index >= av.len() {
            return Err(Error::InvalidAxis {
                op: "select",
                axis: index,
                shape: av.shape().to_vec(),
            });
        }
        let value = Tensor::scalar(av.data()[index]);
        let rg = self.rg(ai);
        Ok(self.push(value, Op::Select { input: ai, index }, rg))
    }

    /// `-log softmax(logits)[label]` for a one-dimensional logit vector.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let li = self.idx(logits)?;
        let lv = &self.nodes[li].value;
        if lv.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: lv.shape().to_vec(),
                right: vec![lv.len()],
            });
        }
        if label >= lv.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: lv.len(),
            });
        }
        let x = lv.to_f64_vec();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = x.iter().map(|v| (v - log_z).exp()).collect();
        let value = Tensor::scalar(T::from_f64(log_z - x[label]));
        let rg = self.rg(li);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: li,
                label,
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a one-element `loss`. Visits every node once, in
    /// reverse insertion order, accumulating by summation.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let li = self.idx(loss)?;
        let lv = &self.nodes[li].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![T::one()]);
        for i in (0..=li).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match g {
                Some(g) if n.requires_grad => Tensor::new(n.value.shape().to_vec(), g).ok(),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], target: usize, contribution: Vec<T>) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(acc) => acc.iter_mut().zip(contribution).for_each(|(a, c)| *a += c),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Vec<T>>],
        target: usize,
        f: impl FnOnce(&mut [T]),
    ) {
        if !self.nodes[target].requires_grad {
            return;
        }
        let len = self.nodes[target].value.len();
        let slot = grads[target].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Elementwise { kind, a, b, b_map } => {
                let (a, b) = (*a, *b);
                let (x, y) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                let yv = |k: usize| match b_map {
                    Some(m) => y[m[k]],
                    None => y[k],
                };
                if self.rg(a) {
                    let ga: Vec<T> = match kind {
                        Binary::Add | Binary::Sub => g.to_vec(),
                        Binary::Mul => g.iter().enumerate().map(|(k, &d)| d * yv(k)).collect(),
                    };
                    self.accumulate(grads, a, ga);
                }
                if self.rg(b) {
                    self.accumulate_with(grads, b, |gb| {
                        for (k, &d) in g.iter().enumerate() {
                            let j = b_map.as_ref().map_or(k, |m| m[k]);
                            gb[j] += match kind {
                                Binary::Add => d,
                                Binary::Sub => -d,
                                Binary::Mul => d * x[k],
                            };
                        }
                    });
                }
            }
            Op::Scale(a, factor) => {
                let s = T::from_f64(*factor);
                self.accumulate(grads, *a, g.iter().map(|&d| d * s).collect());
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(a) {
                    let ga = kernels::matmul_nt(g, self.nodes[b].value.data(), m, n, k);
                    self.accumulate(grads, a, ga);
                }
                if self.rg(b) {
                    let gb = kernels::matmul_tn(self.nodes[a].value.data(), g, m, k, n);
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let want = [self.rg(*input), self.rg(*kernel), self.rg(*bias)];
                let cg = kernels::conv2d_backward(
                    *geom,
                    self.nodes[*input].value.data(),
                    self.nodes[*kernel].value.data(),
                    g,
                    want,
                );
                if let Some(gi) = cg.input {
                    self.accumulate(grads, *input, gi);
                }
                if let Some(gk) = cg.kernel {
                    self.accumulate(grads, *kernel, gk);
                }
                if let Some(gb) = cg.bias {
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::MaxPool2d { input, argmax } => {
                self.accumulate_with(grads, *input, |gi| {
                    for (&src, &d) in argmax.iter().zip(g) {
                        gi[src] += d;
                    }
                });
            }
            Op::AvgPool2d { input, window } => {
                let gi = kernels::avgpool2d_backward(self.nodes[*input].value.shape(), *window, g);
                self.accumulate(grads, *input, gi);
            }
            Op::Relu(a) => {
                let x = self.nodes[*a].value.data();
                let ga = g
                    .iter()
                    .zip(x)
                    .map(|(&d, &v)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let ga = g
                    .iter()
                    .zip(y)
                    .map(|(&d, &t)| d * (T::one() - t * t))
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax { input, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let mut ga = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: T = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            ga[at(j)] = y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *input, ga);
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::SumAxis { input, axis } => {
                let (outer, n, inner) = axis_split(self.nodes[*input].value.shape(), *axis);
                let mut ga = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    for _ in 0..n {
                        ga.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.accumulate(grads, *input, ga);
            }
            Op::SumAll(a) => {
                let n = self.nodes[*a].value.len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::ConcatLast(parts) => {
                let total = *node.value.shape().last().unwrap();
                let rows = node.value.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = *self.nodes[p].value.shape().last().unwrap();
                    if self.rg(p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..][..w]);
                        }
                        self.accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::Select { input, index } => {
                let (input, index) = (*input, *index);
                self.accumulate_with(grads, input, |gi| gi[index] += g[0]);
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                let d = g[0].as_f64();
                let gl = probs
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| T::from_f64(d * (p - if c == *label { 1.0 } else { 0.0 })))
                    .collect();
                self.accumulate(grads, *logits, gl);
            }
        }
    }
}

/// Gradient store produced by [`Tape::backward`].
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
    requires: Vec<bool>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Result<Tensor<T>> {
        if v.tape != self.tape {
            return Err(Error::ForeignVar);
        }
        if !self.requires[v.index] {
            return Err(Error::Detached);
        }
        Ok(self.grads[v.index]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.index].clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[3], &[1., 2., 3.]));
        let z = tape.constant(Tensor::zeros(vec![3]));
        let m = tape.mul(a, z).unwrap();
        assert_eq!(tape.value(m).data(), &[0., 0., 0.]);
        let s = tape.add(a, z).unwrap();
        assert_eq!(tape.value(s), tape.value(a));
    }

    #[test]
    fn mul_gradient_is_other_operand() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(t(&[1], &[2.0]));
        let b = tape.param(t(&[1], &[3.0]));
        let p = tape.mul(a, b).unwrap();
        let loss = tape.sum(p).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[3.0]);
        assert_eq!(g.get(b).unwrap().data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2]));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::<f64>::new();
        let i = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let x = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let r = tape.constant(t(&[1, 2], &[1., 2.]));
        let c = tape.constant(t(&[2, 1], &[3., 4.]));
        let y = tape.matmul(r, c).unwrap();
        assert_eq!(tape.value(y).data(), &[11.0]);
        assert!(tape.matmul(r, r).is_err());
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![4], 0.7));
        let y = tape.softmax(x, 0).unwrap();
        assert!(tape.value(y).data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let x = tape.constant(t(&[2], &[2f64.ln(), 0.0]));
        let y = tape.softmax(x, 0).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            tape.softmax(x, 1),
            Err(Error::InvalidAxis { axis: 1, .. })
        ));
    }

    #[test]
    fn tanh_at_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros(vec![5]));
        let y = tape.tanh(x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 5]);
    }

    #[test]
    fn square_gradient_accumulates_over_uses() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        let g = tape.backward(sq).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros(vec![2]));
        let c = tape.constant(Tensor::zeros(vec![2]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
        let y = tape.add(x, c).unwrap();
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(matches!(g.get(c), Err(Error::Detached)));
        let mut other = Tape::<f64>::new();
        let z = other.param(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(z), Err(Error::ForeignVar)));
    }

    #[test]
    fn broadcast_mul_matches_replication() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(t(&[2, 1, 3], &[1., 2., 3., 4., 5., 6.]));
        let a = tape.constant(t(&[2, 1, 1], &[0.5, 2.0]));
        let rep = tape.constant(t(&[2, 1, 3], &[0.5, 0.5, 0.5, 2.0, 2.0, 2.0]));
        let y1 = tape.mul(f, a).unwrap();
        let y2 = tape.mul(f, rep).unwrap();
        assert_eq!(tape.value(y1), tape.value(y2));
    }

    #[test]
    fn cross_entropy_uniform_is_log_classes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(vec![10]));
        let l = tape.cross_entropy(x, 3).unwrap();
        assert!((tape.value(l).item() - 10f64.ln()).abs() < 1e-12);
        assert!(matches!(
            tape.cross_entropy(x, 10),
            Err(Error::LabelOutOfRange { label: 10, classes: 10 })
        ));
    }
}
