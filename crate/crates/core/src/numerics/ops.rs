use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, im2col_channels_first};
use crate::error::{Error, Result};
use crate::real::{c, Real};
use crate::tensor::Tensor;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Default LayerNorm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn expect_ndim<F: Real>(op: &'static str, t: &Tensor<F>, ndim: usize) -> Result<()> {
    if t.ndim() != ndim {
        return Err(Error::invalid(format!(
            "{op}: expected a {ndim}-D tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// conv1d (valid padding)

fn conv1d_dims<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<(usize, usize, usize, usize)> {
    const OP: &str = "conv1d_valid";
    expect_ndim(OP, x, 2)?;
    expect_ndim(OP, w, 3)?;
    expect_ndim(OP, b, 1)?;
    let (cin, len) = (x.shape()[0], x.shape()[1]);
    let (cout, wcin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    Error::check_dim(OP, "weight input channels", cin, wcin)?;
    Error::check_dim(OP, "bias length", cout, b.shape()[0])?;
    if k == 0 {
        return Err(Error::invalid("conv1d_valid: kernel length is zero"));
    }
    if len < k {
        return Err(Error::invalid(format!(
            "conv1d_valid: input length {len} is shorter than kernel length {k}"
        )));
    }
    Ok((cin, len, cout, k))
}

/// Valid 1-D convolution of a channels-first `[cin x len]` input with weights
/// `[cout x cin x k]`: `out[o, t] = b[o] + sum_{c,j} w[o, c, j] * x[c, t + j]`.
pub fn conv1d_valid<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (cin, len, cout, k) = conv1d_dims(x, w, b)?;
    let out_len = len - k + 1;
    let width = cin * k;
    let mut cols = vec![F::zero(); out_len * width];
    im2col_channels_first(x.data(), cin, len, k, &mut cols);
    let mut out = Vec::with_capacity(cout * out_len);
    for &bo in b.data() {
        out.extend(core::iter::repeat_n(bo, out_len));
    }
    // out[cout x out_len] += W[cout x width] * cols^T[width x out_len]
    gemm(
        cout,
        width,
        out_len,
        F::one(),
        w.data(),
        width,
        1,
        &cols,
        1,
        width,
        F::one(),
        &mut out,
        out_len,
        1,
    );
    Tensor::new([cout, out_len], out)
}

pub struct Conv1dGrads<F> {
    pub dx: Option<Tensor<F>>,
    pub dw: Tensor<F>,
    pub db: Tensor<F>,
}

/// Backward rule of [`conv1d_valid`]. The input gradient is only formed when
/// `want_input_grad` is set.
pub fn conv1d_valid_backward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
    upstream: &Tensor<F>,
    want_input_grad: bool,
) -> Result<Conv1dGrads<F>> {
    let (cin, len, cout, k) = conv1d_dims(x, w, b)?;
    let out_len = len - k + 1;
    Error::check_dim(
        "conv1d_valid_backward",
        "upstream rows",
        cout,
        upstream.shape()[0],
    )?;
    Error::check_dim(
        "conv1d_valid_backward",
        "upstream length",
        out_len,
        upstream.len() / cout.max(1),
    )?;
    let width = cin * k;
    let mut cols = vec![F::zero(); out_len * width];
    im2col_channels_first(x.data(), cin, len, k, &mut cols);
    let dy = upstream.data();

    let mut dw = vec![F::zero(); cout * width];
    // dW[cout x width] = dY[cout x out_len] * cols[out_len x width]
    gemm(
        cout,
        out_len,
        width,
        F::one(),
        dy,
        out_len,
        1,
        &cols,
        width,
        1,
        F::zero(),
        &mut dw,
        width,
        1,
    );
    let db: Vec<F> = dy
        .chunks(out_len)
        .map(|r| r.iter().copied().sum())
        .collect();

    let dx = if want_input_grad {
        let mut dcols = vec![F::zero(); out_len * width];
        // dcols[out_len x width] = dY^T[out_len x cout] * W[cout x width]
        gemm(
            out_len,
            cout,
            width,
            F::one(),
            dy,
            1,
            out_len,
            w.data(),
            width,
            1,
            F::zero(),
            &mut dcols,
            width,
            1,
        );
        let mut dx = vec![F::zero(); cin * len];
        for t in 0..out_len {
            for ch in 0..cin {
                for j in 0..k {
                    dx[ch * len + t + j] += dcols[t * width + ch * k + j];
                }
            }
        }
        Some(Tensor::new([cin, len], dx)?)
    } else {
        None
    };

    Ok(Conv1dGrads {
        dx,
        dw: Tensor::new([cout, cin, k], dw)?,
        db: Tensor::vector(db),
    })
}

// ---------------------------------------------------------------------------
// linear

fn linear_dims<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<(usize, usize)> {
    expect_ndim("linear", x, 1)?;
    expect_ndim("linear", w, 2)?;
    expect_ndim("linear", b, 1)?;
    let (dout, din) = (w.shape()[0], w.shape()[1]);
    Error::check_dim("linear", "input length", din, x.len())?;
    Error::check_dim("linear", "bias length", dout, b.len())?;
    Ok((dout, din))
}

/// `out = w x + b` on raw slices; `w` is `[dout x din]` row-major.
pub fn linear_into<F: Real>(x: &[F], w: &[F], b: &[F], out: &mut [F]) {
    let din = x.len();
    for (o, (dst, &bo)) in out.iter_mut().zip(b).enumerate() {
        let row = &w[o * din..(o + 1) * din];
        *dst = bo + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<F>();
    }
}

/// Accumulates the gradients of `out = w x + b`: `dw += dy x^T`, `db += dy`,
/// and, when given, `dx += w^T dy`.
pub fn linear_backward_accumulate<F: Real>(
    x: &[F],
    w: &[F],
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
    dx: Option<&mut [F]>,
) {
    let din = x.len();
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        if g == F::zero() {
            continue;
        }
        let row = &mut dw[o * din..(o + 1) * din];
        for (d, &v) in row.iter_mut().zip(x) {
            *d += g * v;
        }
    }
    if let Some(dx) = dx {
        for (o, &g) in dy.iter().enumerate() {
            if g == F::zero() {
                continue;
            }
            let row = &w[o * din..(o + 1) * din];
            for (d, &wv) in dx.iter_mut().zip(row) {
                *d += g * wv;
            }
        }
    }
}

pub fn linear<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (dout, _) = linear_dims(x, w, b)?;
    let mut out = vec![F::zero(); dout];
    linear_into(x.data(), w.data(), b.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (dout, din) = linear_dims(x, w, b)?;
    Error::check_dim("linear_backward", "upstream length", dout, upstream.len())?;
    let mut dx = vec![F::zero(); din];
    let mut dw = vec![F::zero(); dout * din];
    let mut db = vec![F::zero(); dout];
    linear_backward_accumulate(
        x.data(),
        w.data(),
        upstream.data(),
        &mut dw,
        &mut db,
        Some(&mut dx),
    );
    Ok((
        Tensor::vector(dx),
        Tensor::new([dout, din], dw)?,
        Tensor::vector(db),
    ))
}

// ---------------------------------------------------------------------------
// layer norm

/// Cached statistics of a LayerNorm forward pass.
#[derive(Debug, Clone, Default)]
pub struct LayerNormCache<F> {
    pub normalized: Vec<F>,
    pub inv_std: F,
}

/// `out = gamma * (x - mean) / sqrt(var + eps) + beta` with the population
/// variance. Writes the normalized core into `cache`.
pub fn layer_norm_into<F: Real>(
    x: &[F],
    gamma: &[F],
    beta: &[F],
    eps: F,
    out: &mut [F],
    cache: &mut LayerNormCache<F>,
) {
    let n = F::from_usize(x.len()).unwrap();
    let mean = x.iter().copied().sum::<F>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let inv_std = F::one() / (var + eps).sqrt();
    cache.normalized.clear();
    cache
        .normalized
        .extend(x.iter().map(|&v| (v - mean) * inv_std));
    cache.inv_std = inv_std;
    for (i, o) in out.iter_mut().enumerate() {
        *o = gamma[i] * cache.normalized[i] + beta[i];
    }
}

/// Backward of [`layer_norm_into`]: accumulates into `dgamma`/`dbeta` and
/// overwrites `dx`.
pub fn layer_norm_backward_into<F: Real>(
    dy: &[F],
    gamma: &[F],
    cache: &LayerNormCache<F>,
    dx: &mut [F],
    dgamma: &mut [F],
    dbeta: &mut [F],
) {
    let n = F::from_usize(dy.len()).unwrap();
    let xhat = &cache.normalized;
    let mut mean_g = F::zero();
    let mut mean_gx = F::zero();
    for i in 0..dy.len() {
        dgamma[i] += dy[i] * xhat[i];
        dbeta[i] += dy[i];
        let g = dy[i] * gamma[i];
        mean_g += g;
        mean_gx += g * xhat[i];
    }
    mean_g /= n;
    mean_gx /= n;
    for i in 0..dy.len() {
        let g = dy[i] * gamma[i];
        dx[i] = cache.inv_std * (g - mean_g - xhat[i] * mean_gx);
    }
}

fn layer_norm_dims<F: Real>(x: &Tensor<F>, gamma: &Tensor<F>, beta: &Tensor<F>) -> Result<usize> {
    expect_ndim("layer_norm", x, 1)?;
    let d = x.len();
    if d < 2 {
        return Err(Error::invalid(format!(
            "layer_norm: needs at least 2 features for a variance, got {d}"
        )));
    }
    Error::check_dim("layer_norm", "gamma length", d, gamma.len())?;
    Error::check_dim("layer_norm", "beta length", d, beta.len())?;
    Ok(d)
}

pub fn layer_norm<F: Real>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: F,
) -> Result<Tensor<F>> {
    let d = layer_norm_dims(x, gamma, beta)?;
    let mut out = vec![F::zero(); d];
    let mut cache = LayerNormCache::default();
    layer_norm_into(
        x.data(),
        gamma.data(),
        beta.data(),
        eps,
        &mut out,
        &mut cache,
    );
    Ok(Tensor::vector(out))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward<F: Real>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: F,
    upstream: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let d = layer_norm_dims(x, gamma, beta)?;
    Error::check_dim("layer_norm_backward", "upstream length", d, upstream.len())?;
    let mut out = vec![F::zero(); d];
    let mut cache = LayerNormCache::default();
    layer_norm_into(
        x.data(),
        gamma.data(),
        beta.data(),
        eps,
        &mut out,
        &mut cache,
    );
    let mut dx = vec![F::zero(); d];
    let mut dg = vec![F::zero(); d];
    let mut dbeta = vec![F::zero(); d];
    layer_norm_backward_into(
        upstream.data(),
        gamma.data(),
        &cache,
        &mut dx,
        &mut dg,
        &mut dbeta,
    );
    Ok((
        Tensor::vector(dx),
        Tensor::vector(dg),
        Tensor::vector(dbeta),
    ))
}

// ---------------------------------------------------------------------------
// pooling

/// Mean over the time axis of a `[channels x len]` tensor.
pub fn global_avg_pool<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    expect_ndim("global_avg_pool", x, 2)?;
    let len = x.shape()[1];
    if len == 0 {
        return Err(Error::invalid("global_avg_pool: empty time axis"));
    }
    let n = F::from_usize(len).unwrap();
    Ok(Tensor::vector(
        x.data()
            .chunks(len)
            .map(|r| r.iter().copied().sum::<F>() / n)
            .collect(),
    ))
}

pub fn global_avg_pool_backward<F: Real>(x: &Tensor<F>, upstream: &Tensor<F>) -> Result<Tensor<F>> {
    expect_ndim("global_avg_pool_backward", x, 2)?;
    let (ch, len) = (x.shape()[0], x.shape()[1]);
    if len == 0 {
        return Err(Error::invalid("global_avg_pool: empty time axis"));
    }
    Error::check_dim(
        "global_avg_pool_backward",
        "upstream length",
        ch,
        upstream.len(),
    )?;
    let inv = F::one() / F::from_usize(len).unwrap();
    let mut dx = Vec::with_capacity(ch * len);
    for &g in upstream.data() {
        dx.extend(core::iter::repeat_n(g * inv, len));
    }
    Tensor::new([ch, len], dx)
}

// ---------------------------------------------------------------------------
// activations

#[inline]
pub fn sigmoid_scalar<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub fn relu_scalar<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

pub fn sigmoid<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(sigmoid_scalar)
}

pub fn tanh<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(F::tanh)
}

pub fn relu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(relu_scalar)
}

/// Max-shifted softmax over a slice.
pub fn softmax_into<F: Real>(x: &[F], out: &mut [F]) {
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    expect_ndim("softmax", x, 1)?;
    if x.is_empty() {
        return Err(Error::invalid("softmax: empty input"));
    }
    let mut out = vec![F::zero(); x.len()];
    softmax_into(x.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Elementwise backward given the forward *output* `y`.
pub fn sigmoid_backward<F: Real>(y: &Tensor<F>, upstream: &Tensor<F>) -> Tensor<F> {
    zip_map(y, upstream, |s, g| g * s * (F::one() - s))
}

pub fn tanh_backward<F: Real>(y: &Tensor<F>, upstream: &Tensor<F>) -> Tensor<F> {
    zip_map(y, upstream, |t, g| g * (F::one() - t * t))
}

/// Uses the forward *input*; the subgradient at 0 is taken as 0.
pub fn relu_backward<F: Real>(x: &Tensor<F>, upstream: &Tensor<F>) -> Tensor<F> {
    zip_map(
        x,
        upstream,
        |v, g| if v > F::zero() { g } else { F::zero() },
    )
}

pub fn softmax_backward<F: Real>(y: &Tensor<F>, upstream: &Tensor<F>) -> Tensor<F> {
    let dot: F = y
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&p, &g)| p * g)
        .sum();
    zip_map(y, upstream, |p, g| p * (g - dot))
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &g)| f(x, g))
            .collect(),
    )
    .expect("same shape")
}

// ---------------------------------------------------------------------------
// loss

/// Clamped probability of the true class, plus whether the clamp was active.
#[inline]
pub fn clamp_prob<F: Real>(p: F) -> (F, bool) {
    let lo = c::<F>(PROB_CLAMP);
    let hi = F::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Two-class cross-entropy `-[y ln p1 + (1-y) ln(1-p1)]`, evaluated as
/// `-ln p[y]` (identical for a normalized pair).
pub fn cross_entropy<F: Real>(p_hat: &Tensor<F>, label: u8) -> Result<F> {
    check_binary(p_hat, label)?;
    let (p, _) = clamp_prob(p_hat.data()[label as usize]);
    Ok(-p.ln())
}

pub fn cross_entropy_backward<F: Real>(p_hat: &Tensor<F>, label: u8) -> Result<Tensor<F>> {
    check_binary(p_hat, label)?;
    let mut d = Tensor::zeros([2]);
    let (p, clamped) = clamp_prob(p_hat.data()[label as usize]);
    if !clamped {
        d.data_mut()[label as usize] = -F::one() / p;
    }
    Ok(d)
}

fn check_binary<F: Real>(p_hat: &Tensor<F>, label: u8) -> Result<()> {
    Error::check_dim("cross_entropy", "probability vector length", 2, p_hat.len())?;
    if label > 1 {
        return Err(Error::invalid(format!(
            "cross_entropy: label {label} is not 0 or 1"
        )));
    }
    Ok(())
}
