//! Dense layer primitives with forward and analytic backward rules.
//!
//! Tensor-level functions (`conv1d_valid`, `linear`, ...) validate shapes and
//! allocate their outputs. The slice-level kernels underneath are shared with
//! the model's training path, which works on preallocated buffers.

mod grad;
mod ops;

pub use grad::{
    grad_check, Conv1dValidOp, CrossEntropyOp, DifferentiableOp, GlobalAvgPoolOp, GradCheckReport,
    LayerNormOp, LinearOp, ReluOp, SigmoidOp, SoftmaxOp, TanhOp, GRAD_CHECK_REL_FLOOR,
};
pub use ops::*;

use crate::real::Real;

/// Checked strided matrix product `c = alpha * a * b + beta * c`, with `a`
/// of shape `m x k` and `b` of shape `k x n`. Strides are in elements.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    rsa: usize,
    csa: usize,
    b: &[F],
    rsb: usize,
    csb: usize,
    beta: F,
    c: &mut [F],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(extent(m, n, rsc, csc) < c.len(), "gemm: c out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(extent(m, k, rsa, csa) < a.len(), "gemm: a out of bounds");
    assert!(extent(k, n, rsb, csb) < b.len(), "gemm: b out of bounds");
    // SAFETY: bounds of every addressed element were checked above and the
    // output slice is uniquely borrowed.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        )
    }
}

/// Unfolds a time-major `[len x channels]` signal into the `[len-k+1 x channels*k]`
/// patch matrix used by the valid convolution; column `c*k + j` of row `t`
/// holds `x[t + j, c]`.
pub fn im2col_time_major<F: Real>(x: &[F], len: usize, channels: usize, k: usize, out: &mut [F]) {
    let out_len = len + 1 - k;
    let width = channels * k;
    debug_assert_eq!(out.len(), out_len * width);
    for t in 0..out_len {
        let row = &mut out[t * width..(t + 1) * width];
        for j in 0..k {
            let src = &x[(t + j) * channels..(t + j + 1) * channels];
            for (c, &v) in src.iter().enumerate() {
                row[c * k + j] = v;
            }
        }
    }
}

/// Same patch matrix for a channels-first `[channels x len]` signal.
pub fn im2col_channels_first<F: Real>(
    x: &[F],
    channels: usize,
    len: usize,
    k: usize,
    out: &mut [F],
) {
    let out_len = len + 1 - k;
    let width = channels * k;
    debug_assert_eq!(out.len(), out_len * width);
    for t in 0..out_len {
        let row = &mut out[t * width..(t + 1) * width];
        for c in 0..channels {
            row[c * k..(c + 1) * k].copy_from_slice(&x[c * len + t..c * len + t + k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposed_operands() {
        // a: 2x3 row-major, b given as its transpose (3x2 stored 2x3).
        let a = [1.0f64, 2., 3., 4., 5., 6.];
        let bt = [1.0f64, 0., -1., 2., 1., 0.];
        let mut c = [10.0f64; 4];
        gemm(2, 3, 2, 1.0, &a, 3, 1, &bt, 1, 3, 1.0, &mut c, 2, 1);
        // row0: [1,2,3]·[1,0,-1] = -2, [1,2,3]·[2,1,0] = 4
        // row1: [4,5,6]·[1,0,-1] = -2, [4,5,6]·[2,1,0] = 13
        assert_eq!(c, [8.0, 14.0, 8.0, 23.0]);
    }

    #[test]
    fn im2col_layouts_agree() {
        let len = 5;
        let ch = 2;
        let k = 3;
        let tm: [f64; 10] = core::array::from_fn(|i| i as f64);
        let mut cf = [0.0f64; 10];
        for t in 0..len {
            for c in 0..ch {
                cf[c * len + t] = tm[t * ch + c];
            }
        }
        let mut a = [0.0; 18];
        let mut b = [0.0; 18];
        im2col_time_major(&tm, len, ch, k, &mut a);
        im2col_channels_first(&cf, ch, len, k, &mut b);
        assert_eq!(a, b);
    }
}
