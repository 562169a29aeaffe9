//! Stride-1 1D convolution kernels.
//!
//! The three routines are the partial derivatives of one trilinear form
//! `T(x, w, y) = Σ y[b,o,t] · w[o,c,k] · x[b,c,t+k-pad]`:
//! [`conv1d`] is `∂T/∂y`, [`conv1d_input_grad`] is `∂T/∂x` (a transposed
//! convolution) and [`conv1d_weight_grad`] is `∂T/∂w`. Because each one's
//! vector-Jacobian products are the other two, the set is closed under
//! differentiation to any order.

use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_width(in_w: usize, kernel: usize, pad: usize) -> Option<usize> {
        (in_w + 2 * pad + 1).checked_sub(kernel)
    }

    pub fn in_width(out_w: usize, kernel: usize, pad: usize) -> Option<usize> {
        (out_w + kernel - 1).checked_sub(2 * pad)
    }
}

/// `cols[(c*K + k), (b*Wout + t)] = x[b, c, t + k - pad]`, zero outside.
fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let cols_w = g.batch * g.out_w;
    let mut cols = vec![T::zero(); g.in_ch * g.kernel * cols_w];
    for c in 0..g.in_ch {
        for k in 0..g.kernel {
            let row = &mut cols[(c * g.kernel + k) * cols_w..(c * g.kernel + k + 1) * cols_w];
            for b in 0..g.batch {
                let src = &x[(b * g.in_ch + c) * g.in_w..(b * g.in_ch + c + 1) * g.in_w];
                let dst = &mut row[b * g.out_w..(b + 1) * g.out_w];
                for (t, d) in dst.iter_mut().enumerate() {
                    let s = t + k;
                    if s >= g.pad && s - g.pad < g.in_w {
                        *d = src[s - g.pad];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let cols_w = g.batch * g.out_w;
    let mut x = vec![T::zero(); g.batch * g.in_ch * g.in_w];
    for c in 0..g.in_ch {
        for k in 0..g.kernel {
            let row = &cols[(c * g.kernel + k) * cols_w..(c * g.kernel + k + 1) * cols_w];
            for b in 0..g.batch {
                let dst = &mut x[(b * g.in_ch + c) * g.in_w..(b * g.in_ch + c + 1) * g.in_w];
                let src = &row[b * g.out_w..(b + 1) * g.out_w];
                for (t, &v) in src.iter().enumerate() {
                    let s = t + k;
                    if s >= g.pad && s - g.pad < g.in_w {
                        dst[s - g.pad] = dst[s - g.pad] + v;
                    }
                }
            }
        }
    }
    x
}

/// `[B, O, W]` → `[O, B*W]`
fn batch_to_cols<T: Real>(y: &[T], batch: usize, ch: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); y.len()];
    for b in 0..batch {
        for o in 0..ch {
            let src = &y[(b * ch + o) * w..(b * ch + o + 1) * w];
            out[o * batch * w + b * w..o * batch * w + (b + 1) * w].copy_from_slice(src);
        }
    }
    out
}

fn cols_to_batch<T: Real>(y: &[T], batch: usize, ch: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); y.len()];
    for b in 0..batch {
        for o in 0..ch {
            out[(b * ch + o) * w..(b * ch + o + 1) * w]
                .copy_from_slice(&y[o * batch * w + b * w..o * batch * w + (b + 1) * w]);
        }
    }
    out
}

/// x `[B, C, W]`, w `[O, C, K]` → `[B, O, W + 2·pad − K + 1]`.
pub fn conv1d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, pad: usize) -> Tensor<T> {
    let (xs, ws) = (x.shape(), w.shape());
    assert!(xs.len() == 3 && ws.len() == 3 && xs[1] == ws[1], "conv1d shapes {xs:?} {ws:?}");
    let out_w = ConvGeom::out_width(xs[2], ws[2], pad).expect("kernel wider than padded input");
    let g = ConvGeom { batch: xs[0], in_ch: xs[1], in_w: xs[2], out_ch: ws[0], out_w, kernel: ws[2], pad };
    let cols = im2col(x.data(), &g);
    let ck = g.in_ch * g.kernel;
    let n = g.batch * g.out_w;
    let mut tmp = vec![T::zero(); g.out_ch * n];
    T::gemm(
        g.out_ch,
        ck,
        n,
        T::one(),
        w.data(),
        ck as isize,
        1,
        &cols,
        n as isize,
        1,
        T::zero(),
        &mut tmp,
        n as isize,
        1,
    );
    Tensor::new(&[g.batch, g.out_ch, g.out_w], cols_to_batch(&tmp, g.batch, g.out_ch, g.out_w))
        .expect("conv1d output shape")
}

/// Adjoint of [`conv1d`] in its input: y `[B, O, Wy]`, w `[O, C, K]` →
/// `[B, C, Wy − K + 1 + 2·pad]`. This is exactly a stride-1 transposed
/// convolution whose weight is laid out `[in, out, K]`.
pub fn conv1d_input_grad<T: Real>(y: &Tensor<T>, w: &Tensor<T>, pad: usize) -> Tensor<T> {
    let (ys, ws) = (y.shape(), w.shape());
    assert!(ys.len() == 3 && ws.len() == 3 && ys[1] == ws[0], "conv_t shapes {ys:?} {ws:?}");
    let in_w = ConvGeom::in_width(ys[2], ws[2], pad).expect("padding too large for transposed conv");
    let g = ConvGeom { batch: ys[0], in_ch: ws[1], in_w, out_ch: ws[0], out_w: ys[2], kernel: ws[2], pad };
    let yc = batch_to_cols(y.data(), g.batch, g.out_ch, g.out_w);
    let ck = g.in_ch * g.kernel;
    let n = g.batch * g.out_w;
    let mut dcols = vec![T::zero(); ck * n];
    // dcols[CK, n] = W^T[CK, O] · yc[O, n]
    T::gemm(
        ck,
        g.out_ch,
        n,
        T::one(),
        w.data(),
        1,
        ck as isize,
        &yc,
        n as isize,
        1,
        T::zero(),
        &mut dcols,
        n as isize,
        1,
    );
    Tensor::new(&[g.batch, g.in_ch, g.in_w], col2im(&dcols, &g)).expect("conv_t output shape")
}

/// Adjoint of [`conv1d`] in its weight: x `[B, C, Wx]`, y `[B, O, Wy]` →
/// `[O, C, Wx + 2·pad − Wy + 1]`.
pub fn conv1d_weight_grad<T: Real>(x: &Tensor<T>, y: &Tensor<T>, pad: usize) -> Tensor<T> {
    let (xs, ys) = (x.shape(), y.shape());
    assert!(xs.len() == 3 && ys.len() == 3 && xs[0] == ys[0], "wgrad shapes {xs:?} {ys:?}");
    let kernel = (xs[2] + 2 * pad + 1).checked_sub(ys[2]).expect("wgrad widths");
    let g = ConvGeom { batch: xs[0], in_ch: xs[1], in_w: xs[2], out_ch: ys[1], out_w: ys[2], kernel, pad };
    let cols = im2col(x.data(), &g);
    let yc = batch_to_cols(y.data(), g.batch, g.out_ch, g.out_w);
    let ck = g.in_ch * g.kernel;
    let n = g.batch * g.out_w;
    let mut gw = vec![T::zero(); g.out_ch * ck];
    // gw[O, CK] = yc[O, n] · cols^T[n, CK]
    T::gemm(g.out_ch, n, ck, T::one(), &yc, n as isize, 1, &cols, 1, n as isize, T::zero(), &mut gw, ck as isize, 1);
    Tensor::new(&[g.out_ch, g.in_ch, g.kernel], gw).expect("wgrad output shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, pad: usize) -> Tensor<f64> {
        let (b, c, wi) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let wo = wi + 2 * pad + 1 - k;
        let mut out = Tensor::zeros(&[b, o, wo]);
        for bi in 0..b {
            for oi in 0..o {
                for t in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..k {
                            let s = t as isize + ki as isize - pad as isize;
                            if s >= 0 && (s as usize) < wi {
                                acc += w.data()[(oi * c + ci) * k + ki] * x.data()[(bi * c + ci) * wi + s as usize];
                            }
                        }
                    }
                    out.data_mut()[(bi * o + oi) * wo + t] = acc;
                }
            }
        }
        out
    }

    fn pseudo(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        })
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_matches_naive_loop() {
        let x = pseudo(&[3, 4, 9], 1);
        let w = pseudo(&[5, 4, 5], 2);
        for pad in [0, 2] {
            let a = conv1d(&x, &w, pad);
            let b = naive_conv(&x, &w, pad);
            assert_eq!(a.shape(), b.shape());
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identities_hold() {
        // <conv(x,w), y> == <x, conv_t(y,w)> == <w, wgrad(x,y)>
        let x = pseudo(&[2, 3, 7], 3);
        let w = pseudo(&[4, 3, 5], 4);
        let y = pseudo(&[2, 4, 7], 5);
        let lhs = dot(&conv1d(&x, &w, 2), &y);
        let mid = dot(&x, &conv1d_input_grad(&y, &w, 2));
        let rhs = dot(&w, &conv1d_weight_grad(&x, &y, 2));
        assert!((lhs - mid).abs() < 1e-10 && (lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn full_width_kernel_collapses_to_one_column() {
        let x = pseudo(&[2, 3, 20], 6);
        let w = pseudo(&[1, 3, 20], 7);
        let y = conv1d(&x, &w, 0);
        assert_eq!(y.shape(), &[2, 1, 1]);
        let expect: f64 = x.data()[..60].iter().zip(w.data()).map(|(a, b)| a * b).sum();
        assert!((y.data()[0] - expect).abs() < 1e-12);
    }
}
