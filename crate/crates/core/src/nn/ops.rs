//! Layer kernels shared by the encoder, decoder and baseline head.

use crate::scalar::{gemm, Scalar, Trans};

/// `y[N×out] = x[N×in] · wᵀ + b`, with `w` stored `[out, in]`.
pub fn linear_forward<T: Scalar>(x: &[T], n: usize, w: &[T], b: &[T], d_in: usize, d_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * d_out];
    for row in y.chunks_exact_mut(d_out) {
        row.copy_from_slice(b);
    }
    gemm(n, d_in, d_out, T::one(), x, Trans::No, w, Trans::Yes, T::one(), &mut y);
    y
}

/// Accumulates `dw += dyᵀ·x`, `db += Σ dy` and returns `dx = dy·w`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    x: &[T],
    n: usize,
    w: &[T],
    dy: &[T],
    d_in: usize,
    d_out: usize,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Vec<T> {
    gemm(d_out, n, d_in, T::one(), dy, Trans::Yes, x, Trans::No, T::one(), dw);
    for row in dy.chunks_exact(d_out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += *g;
        }
    }
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![T::zero(); n * d_in];
    gemm(n, d_out, d_in, T::one(), dy, Trans::No, w, Trans::No, T::zero(), &mut dx);
    dx
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradients where the ReLU output was not positive.
pub fn relu_mask<T: Scalar>(grad: &mut [T], out: &[T]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Row-wise two-way softmax of `[N×2]` logits.
pub fn softmax2<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    for (z, p) in logits.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        let s = e0 + e1;
        p[0] = e0 / s;
        p[1] = e1 / s;
    }
    out
}

/// Chains `∂L/∂probs` through a row-wise softmax to `∂L/∂logits`.
pub fn softmax_backward<T: Scalar>(probs: &[T], d_probs: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); probs.len()];
    for ((p, dp), dz) in probs.chunks_exact(cols).zip(d_probs.chunks_exact(cols)).zip(out.chunks_exact_mut(cols)) {
        let dot: T = p.iter().zip(dp).map(|(a, b)| *a * *b).sum();
        for j in 0..cols {
            dz[j] = p[j] * (dp[j] - dot);
        }
    }
    out
}

/// 3×3 valid-convolution patch matrix for a channel-major batch.
///
/// `input` is `[C, N, H, W]`; the result is `[C·9, N·(H-2)·(W-2)]`.
pub fn im2col3<T: Scalar>(input: &[T], c: usize, n: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h - 2, w - 2);
    let mut out = Vec::with_capacity(c * 9 * n * oh * ow);
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                for ni in 0..n {
                    let plane = &input[(ci * n + ni) * h * w..][..h * w];
                    for y in 0..oh {
                        out.extend_from_slice(&plane[(y + ky) * w + kx..][..ow]);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col3`]: scatters patch gradients back to `[C, N, H, W]`.
pub fn col2im3<T: Scalar>(cols_grad: &[T], c: usize, n: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h - 2, w - 2);
    let cols = n * oh * ow;
    let mut out = vec![T::zero(); c * n * h * w];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols_grad[((ci * 9) + ky * 3 + kx) * cols..][..cols];
                for ni in 0..n {
                    let plane = &mut out[(ci * n + ni) * h * w..][..h * w];
                    for y in 0..oh {
                        let dst = &mut plane[(y + ky) * w + kx..][..ow];
                        for (d, s) in dst.iter_mut().zip(&row[(ni * oh + y) * ow..][..ow]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling over `planes` planes of `h×w`; odd trailing
/// rows/columns are dropped. Returns pooled values and argmax offsets into
/// the input.
pub fn maxpool2<T: Scalar>(input: &[T], planes: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * ph * pw];
    let mut arg = vec![0u32; planes * ph * pw];
    for (p, plane) in input.chunks_exact(h * w).take(planes).enumerate() {
        let base = p * h * w;
        for y in 0..ph {
            let o = p * ph * pw + y * pw;
            let out_row = &mut out[o..o + pw];
            let arg_row = &mut arg[o..o + pw];
            let top = 2 * y * w;
            let r0 = &plane[top..top + w];
            let r1 = &plane[top + w..top + 2 * w];
            for x in 0..pw {
                let (mut v, mut i) = (r0[2 * x], top + 2 * x);
                if r0[2 * x + 1] > v {
                    (v, i) = (r0[2 * x + 1], top + 2 * x + 1);
                }
                if r1[2 * x] > v {
                    (v, i) = (r1[2 * x], top + w + 2 * x);
                }
                if r1[2 * x + 1] > v {
                    (v, i) = (r1[2 * x + 1], top + w + 2 * x + 1);
                }
                out_row[x] = v;
                arg_row[x] = (base + i) as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<T: Scalar>(d_out: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut d_in = vec![T::zero(); input_len];
    for (g, &i) in d_out.iter().zip(arg) {
        d_in[i as usize] += *g;
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax2(&[0.3f64, -1.2, 50.0, 49.0]);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
        assert!((p[2] + p[3] - 1.0).abs() < 1e-15);
        assert!(p[2] > p[3]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, n, h, w) = (2, 2, 5, 4);
        let x: Vec<f64> = (0..c * n * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let cols = im2col3(&x, c, n, h, w);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 3) % 5) as f64 - 2.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im3(&y, c, n, h, w);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn maxpool_picks_maximum_and_routes_gradient() {
        let x = [1.0f64, 5.0, 2.0, 0.0, 3.0, 4.0];
        let (out, arg) = maxpool2(&x, 1, 2, 3);
        assert_eq!(out, vec![5.0]);
        assert_eq!(arg, vec![1]);
        assert_eq!(maxpool2_backward(&[2.0], &arg, 6), vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
