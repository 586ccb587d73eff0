// Raw slice kernels behind the tape operations. All image buffers are
// H×W×C row-major; kernels are kh×kw×Cin×Cout.

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn check<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Self> {
        let (is, ks) = (input.shape(), kernel.shape());
        if is.len() != 3 || ks.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: is.to_vec(),
                right: ks.to_vec(),
            });
        }
        if ks[0] % 2 == 0 || ks[1] % 2 == 0 {
            return Err(Error::EvenKernel(ks[0], ks[1]));
        }
        if is[2] != ks[2] {
            return Err(Error::ChannelMismatch {
                input: is[2],
                kernel: ks[2],
            });
        }
        if bias.shape() != [ks[3]] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                left: bias.shape().to_vec(),
                right: vec![ks[3]],
            });
        }
        Ok(ConvGeom {
            h: is[0],
            w: is[1],
            cin: is[2],
            cout: ks[3],
            kh: ks[0],
            kw: ks[1],
        })
    }

    // Input coordinate for output `y` and kernel tap `ky` under same-padding.
    #[inline]
    fn src(out: usize, tap: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (out + tap) as isize - (k / 2) as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// Same-padded cross-correlation plus bias.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = ConvGeom::check(input, kernel, bias)?;
    let (x, k, b) = (input.data(), kernel.data(), bias.data());
    let mut out = vec![T::zero(); g.h * g.w * g.cout];
    for y in 0..g.h {
        for xo in 0..g.w {
            let o = (y * g.w + xo) * g.cout;
            let out_px = &mut out[o..o + g.cout];
            out_px.copy_from_slice(b);
            for ky in 0..g.kh {
                let Some(iy) = ConvGeom::src(y, ky, g.kh, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = ConvGeom::src(xo, kx, g.kw, g.w) else {
                        continue;
                    };
                    let in_px = &x[(iy * g.w + ix) * g.cin..][..g.cin];
                    let kbase = (ky * g.kw + kx) * g.cin * g.cout;
                    for (ci, &v) in in_px.iter().enumerate() {
                        if v == T::zero() {
                            continue;
                        }
                        let krow = &k[kbase + ci * g.cout..][..g.cout];
                        for (acc, &kv) in out_px.iter_mut().zip(krow) {
                            *acc += v * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.h, g.w, g.cout], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    g: ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let mut gi = want[0].then(|| vec![T::zero(); input.len()]);
    let mut gk = want[1].then(|| vec![T::zero(); kernel.len()]);
    let gb = want[2].then(|| {
        let mut gb = vec![T::zero(); g.cout];
        for px in grad_out.chunks_exact(g.cout) {
            for (acc, &d) in gb.iter_mut().zip(px) {
                *acc += d;
            }
        }
        gb
    });
    if gi.is_none() && gk.is_none() {
        return ConvGrads {
            input: None,
            kernel: None,
            bias: gb,
        };
    }
    for y in 0..g.h {
        for xo in 0..g.w {
            let dout = &grad_out[(y * g.w + xo) * g.cout..][..g.cout];
            if dout.iter().all(|&d| d == T::zero()) {
                continue;
            }
            for ky in 0..g.kh {
                let Some(iy) = ConvGeom::src(y, ky, g.kh, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = ConvGeom::src(xo, kx, g.kw, g.w) else {
                        continue;
                    };
                    let ibase = (iy * g.w + ix) * g.cin;
                    let kbase = (ky * g.kw + kx) * g.cin * g.cout;
                    for ci in 0..g.cin {
                        let kofs = kbase + ci * g.cout;
                        if let Some(gi) = gi.as_mut() {
                            let krow = &kernel[kofs..][..g.cout];
                            let mut acc = T::zero();
                            for (&kv, &d) in krow.iter().zip(dout) {
                                acc += kv * d;
                            }
                            gi[ibase + ci] += acc;
                        }
                        if let Some(gk) = gk.as_mut() {
                            let v = input[ibase + ci];
                            if v != T::zero() {
                                for (acc, &d) in gk[kofs..kofs + g.cout].iter_mut().zip(dout) {
                                    *acc += v * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gi,
        kernel: gk,
        bias: gb,
    }
}

/// 2×2 non-overlapping max pool. Returns the pooled tensor and, per output
/// element, the flat input index that won (first in row-major order on ties).
pub fn maxpool2d_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d",
            left: s.to_vec(),
            right: vec![0, 0, 0],
        });
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddExtent {
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for xo in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * y) * w + 2 * xo) * c + ch;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + 2 * xo + dx) * c + ch;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, arg))
}

/// Non-overlapping `window×window` average pool.
pub(crate) fn avgpool2d_forward<T: Real>(input: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 || window == 0 || s[0] % window != 0 || s[1] % window != 0 {
        return Err(Error::ShapeMismatch {
            op: "avgpool2d",
            left: s.to_vec(),
            right: vec![window, window],
        });
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    let (oh, ow) = (h / window, w / window);
    let scale = T::from_f64(1.0 / (window * window) as f64);
    let x = input.data();
    let mut out = vec![T::zero(); oh * ow * c];
    for y in 0..h {
        for xi in 0..w {
            let o = ((y / window) * ow + xi / window) * c;
            let i = (y * w + xi) * c;
            for ch in 0..c {
                out[o + ch] += x[i + ch];
            }
        }
    }
    out.iter_mut().for_each(|v| *v = *v * scale);
    Tensor::new(vec![oh, ow, c], out)
}

pub(crate) fn avgpool2d_backward<T: Real>(
    in_shape: &[usize],
    window: usize,
    grad_out: &[T],
) -> Vec<T> {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let ow = w / window;
    let scale = T::from_f64(1.0 / (window * window) as f64);
    let mut gi = vec![T::zero(); h * w * c];
    for y in 0..h {
        for xi in 0..w {
            let o = ((y / window) * ow + xi / window) * c;
            let i = (y * w + xi) * c;
            for ch in 0..c {
                gi[i + ch] = grad_out[o + ch] * scale;
            }
        }
    }
    gi
}

/// `a[m×k] · b[k×n]`, accumulated in i-k-j order.
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (acc, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *acc += av * bv;
            }
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `a[k×m]ᵀ · b[k×n]`.
pub(crate) fn matmul_tn<T: Real>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == T::zero() {
                continue;
            }
            for (acc, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *acc += av * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_copies_input() {
        let x = Tensor::<f64>::from_f64(vec![2, 3, 1], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let k = Tensor::from_f64(vec![1, 1, 1, 1], &[1.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        assert_eq!(conv2d_forward(&x, &k, &b).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_counts_neighbours() {
        let x = Tensor::<f64>::full(vec![4, 4, 1], 1.0);
        let k = Tensor::full(vec![3, 3, 1, 1], 1.0);
        let b = Tensor::zeros(vec![1]);
        let y = conv2d_forward(&x, &k, &b).unwrap();
        let d = y.data();
        assert_eq!(d[0], 4.0);
        assert_eq!(d[3], 4.0);
        assert_eq!(d[12], 4.0);
        assert_eq!(d[15], 4.0);
        assert_eq!(d[5], 9.0);
        assert_eq!(d[10], 9.0);
        assert_eq!(d[1], 6.0);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernel() {
        let x = Tensor::<f64>::zeros(vec![4, 4, 2]);
        let b = Tensor::zeros(vec![1]);
        assert!(matches!(
            conv2d_forward(&x, &Tensor::zeros(vec![3, 3, 3, 1]), &b),
            Err(Error::ChannelMismatch { input: 2, kernel: 3 })
        ));
        assert!(matches!(
            conv2d_forward(&x, &Tensor::zeros(vec![2, 2, 2, 1]), &b),
            Err(Error::EvenKernel(2, 2))
        ));
    }

    #[test]
    fn maxpool_single_window_and_ties() {
        let x = Tensor::<f64>::from_f64(vec![2, 2, 1], &[1., 2., 3., 4.]).unwrap();
        let (y, arg) = maxpool2d_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
        let c = Tensor::<f64>::full(vec![4, 4, 1], 7.0);
        let (y, arg) = maxpool2d_forward(&c).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        assert_eq!(arg, vec![0, 2, 8, 10]);
    }

    #[test]
    fn maxpool_rejects_odd_extent() {
        let x = Tensor::<f64>::zeros(vec![3, 4, 1]);
        assert!(matches!(maxpool2d_forward(&x), Err(Error::OddExtent { .. })));
    }

    #[test]
    fn maxpool_vgg_geometry() {
        let x = Tensor::<f32>::zeros(vec![224, 224, 64]);
        let (y, _) = maxpool2d_forward(&x).unwrap();
        assert_eq!(y.shape(), &[112, 112, 64]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 2.0, 1.0, 0.0, 3.0]; // 3x2
        let ab = matmul(&a, &b, 2, 3, 2);
        assert_eq!(ab, vec![5.0, 11.0, 14.0, 23.0]);
        let bt = [1.0, 2.0, 0.0, 0.0, 1.0, 3.0]; // b transposed, 2x3
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 2), ab);
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // a transposed, 3x2
        assert_eq!(matmul_tn(&at, &b, 3, 2, 2), ab);
    }
}
