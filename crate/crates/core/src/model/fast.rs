use alloc::format;
use alloc::vec::Vec;

use super::params::{CnnParams, GatePath, Model, StreamAadParams, N_CLASSES};
use super::window::WindowSequence;
use crate::error::{Error, Result};
use crate::numerics::{
    clamp_prob, gemm, im2col_time_major, layer_norm_backward_into, layer_norm_into,
    linear_backward_accumulate, linear_into, sigmoid_scalar, softmax_into, LayerNormCache,
    LAYER_NORM_EPS,
};
use crate::real::{c, Real};
use crate::tensor::Tensor;

/// Reusable buffers for sequence-level forward and backward passes.
#[derive(Debug, Clone, Default)]
pub struct Scratch<F> {
    cols: Vec<F>,
    packed_w: Vec<F>,
    conv: Vec<F>,
    dconv: Vec<F>,
    dpacked: Vec<F>,
    steps: Vec<Step<F>>,
    positions: usize,
}

/// Per-window forward cache. For the CNN only `ln[0]`, `z[..D]`, `h` and
/// `probs` are used (`h` holds the linear block output).
#[derive(Debug, Clone, Default)]
struct Step<F> {
    ln: Vec<LayerNormCache<F>>,
    z: Vec<F>,
    gates: Vec<F>,
    c_prev: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h_prev: Vec<F>,
    h: Vec<F>,
    feat: Vec<F>,
    probs: [F; 2],
}

impl<F: Real> Scratch<F> {
    pub fn new() -> Self {
        Scratch {
            cols: Vec::new(),
            packed_w: Vec::new(),
            conv: Vec::new(),
            dconv: Vec::new(),
            dpacked: Vec::new(),
            steps: Vec::new(),
            positions: 0,
        }
    }
}

fn check_sequence<F: Real>(seq: &WindowSequence<F>, channels: usize, kernel: usize) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    Error::check_dim("sequence", "channels", channels, seq.channels())?;
    if seq.window_len() < kernel {
        return Err(Error::invalid(format!(
            "window length {} is shorter than the kernel {kernel}",
            seq.window_len()
        )));
    }
    Ok(())
}

/// Valid convolution of every gate path over the whole sequence span.
/// Fills `scratch.conv` as `[positions x (paths * D)]`, pre-activation.
fn conv_forward<F: Real>(
    seq: &WindowSequence<F>,
    paths: &[&GatePath<F>],
    d: usize,
    k: usize,
    s: &mut Scratch<F>,
) {
    let ch = seq.channels();
    let span = seq.span_len();
    let positions = span + 1 - k;
    let width = ch * k;
    let gd = paths.len() * d;
    s.positions = positions;

    s.cols.resize(positions * width, F::zero());
    im2col_time_major(seq.span().data(), span, ch, k, &mut s.cols);

    s.packed_w.clear();
    for p in paths {
        s.packed_w.extend_from_slice(p.conv_w.data());
    }
    s.conv.clear();
    for _ in 0..positions {
        for p in paths {
            s.conv.extend_from_slice(p.conv_b.data());
        }
    }
    // conv[pos x gd] += cols[pos x width] * packed_w^T[width x gd]
    gemm(
        positions,
        width,
        gd,
        F::one(),
        &s.cols,
        width,
        1,
        &s.packed_w,
        1,
        width,
        F::one(),
        &mut s.conv,
        gd,
        1,
    );
}

fn pool_into<F: Real>(
    conv: &[F],
    first: usize,
    out_len: usize,
    gd: usize,
    offset: usize,
    out: &mut [F],
) {
    out.iter_mut().for_each(|v| *v = F::zero());
    for p in first..first + out_len {
        let row = &conv[p * gd + offset..p * gd + offset + out.len()];
        for (o, &v) in out.iter_mut().zip(row) {
            if v > F::zero() {
                *o += v;
            }
        }
    }
    let inv = F::one() / F::from_usize(out_len).unwrap();
    out.iter_mut().for_each(|v| *v *= inv);
}

fn unpool_into<F: Real>(
    conv: &[F],
    dconv: &mut [F],
    first: usize,
    out_len: usize,
    gd: usize,
    offset: usize,
    dpooled: &[F],
) {
    let inv = F::one() / F::from_usize(out_len).unwrap();
    for p in first..first + out_len {
        let base = p * gd + offset;
        for (o, &g) in dpooled.iter().enumerate() {
            if conv[base + o] > F::zero() {
                dconv[base + o] += g * inv;
            }
        }
    }
}

/// Accumulates conv weight/bias gradients of every path from `scratch.dconv`.
fn conv_backward<F: Real>(
    paths: &mut [&mut GatePath<F>],
    d: usize,
    width: usize,
    s: &mut Scratch<F>,
) {
    let gd = paths.len() * d;
    let positions = s.positions;
    s.dpacked.resize(gd * width, F::zero());
    // dpacked[gd x width] = dconv^T[gd x pos] * cols[pos x width]
    gemm(
        gd,
        positions,
        width,
        F::one(),
        &s.dconv,
        1,
        gd,
        &s.cols,
        width,
        1,
        F::zero(),
        &mut s.dpacked,
        width,
        1,
    );
    for (g, path) in paths.iter_mut().enumerate() {
        let src = &s.dpacked[g * d * width..(g + 1) * d * width];
        for (dst, &v) in path.conv_w.data_mut().iter_mut().zip(src) {
            *dst += v;
        }
        let db = path.conv_b.data_mut();
        for p in 0..positions {
            let row = &s.dconv[p * gd + g * d..p * gd + (g + 1) * d];
            for (dst, &v) in db.iter_mut().zip(row) {
                *dst += v;
            }
        }
    }
}

fn ensure_steps<F: Real>(s: &mut Scratch<F>, t: usize, paths: usize, d: usize) {
    if s.steps.len() < t {
        s.steps.resize_with(t, Step::default);
    }
    for st in &mut s.steps[..t] {
        st.ln.resize_with(paths, LayerNormCache::default);
        st.z.resize(paths * d, F::zero());
        st.gates.resize(paths * d, F::zero());
        st.c_prev.resize(d, F::zero());
        st.c.resize(d, F::zero());
        st.tanh_c.resize(d, F::zero());
        st.h_prev.resize(d, F::zero());
        st.h.resize(d, F::zero());
        st.feat.resize(paths * d, F::zero());
    }
}

/// Per-window loss and logit gradient for softmax + clamped cross-entropy.
fn loss_and_dlogits<F: Real>(probs: &[F; 2], label: u8, scale: F) -> (F, [F; 2]) {
    let (p, clamped) = clamp_prob(probs[label as usize]);
    let loss = -p.ln();
    if clamped {
        return (loss, [F::zero(); 2]);
    }
    let mut d = [probs[0] * scale, probs[1] * scale];
    d[label as usize] -= scale;
    (loss, d)
}

// ---------------------------------------------------------------------------
// streaming decoder

fn stream_forward<F: Real>(
    p: &StreamAadParams<F>,
    seq: &WindowSequence<F>,
    s: &mut Scratch<F>,
) -> Result<()> {
    let cfg = p.config;
    let (d, k) = (cfg.hidden, cfg.kernel);
    check_sequence(seq, cfg.channels, k)?;
    let gates = p.gates();
    conv_forward(seq, &gates, d, k, s);
    let t_len = seq.len();
    ensure_steps(s, t_len, 4, d);
    let gd = 4 * d;
    let out_len = seq.window_len() + 1 - k;
    let eps = c::<F>(LAYER_NORM_EPS);
    let mut pooled = alloc::vec![F::zero(); d];
    let mut lin = alloc::vec![F::zero(); d];

    for t in 0..t_len {
        let (done, rest) = s.steps.split_at_mut(t);
        let st = &mut rest[0];
        if t == 0 {
            st.c_prev.iter_mut().for_each(|v| *v = F::zero());
            st.h_prev.iter_mut().for_each(|v| *v = F::zero());
        } else {
            st.c_prev.copy_from_slice(&done[t - 1].c);
            st.h_prev.copy_from_slice(&done[t - 1].h);
        }
        for (g, path) in gates.iter().enumerate() {
            pool_into(&s.conv, t * seq.stride(), out_len, gd, g * d, &mut pooled);
            let feat = &mut st.feat[g * d..(g + 1) * d];
            layer_norm_into(
                &pooled,
                path.ln_gamma.data(),
                path.ln_beta.data(),
                eps,
                feat,
                &mut st.ln[g],
            );
            let z = &mut st.z[g * d..(g + 1) * d];
            linear_into(&st.h_prev, path.lin_w.data(), path.lin_b.data(), z);
            for j in 0..d {
                lin[j] = if z[j] > F::zero() { z[j] } else { F::zero() };
                let pre = feat[j] + lin[j];
                st.gates[g * d + j] = if g == 3 {
                    pre.tanh()
                } else {
                    sigmoid_scalar(pre)
                };
            }
        }
        for j in 0..d {
            let (f, i, o, cand) = (
                st.gates[j],
                st.gates[d + j],
                st.gates[2 * d + j],
                st.gates[3 * d + j],
            );
            st.c[j] = f * st.c_prev[j] + i * cand;
            st.tanh_c[j] = st.c[j].tanh();
            st.h[j] = st.tanh_c[j] * o;
        }
        let mut logits = [F::zero(); 2];
        linear_into(&st.h, p.head.w.data(), p.head.b.data(), &mut logits);
        let mut probs = [F::zero(); 2];
        softmax_into(&logits, &mut probs);
        st.probs = probs;
    }
    Ok(())
}

fn stream_backward<F: Real>(
    p: &StreamAadParams<F>,
    seq: &WindowSequence<F>,
    s: &mut Scratch<F>,
    grads: &mut StreamAadParams<F>,
) -> F {
    let cfg = p.config;
    let (d, k) = (cfg.hidden, cfg.kernel);
    let t_len = seq.len();
    let gd = 4 * d;
    let out_len = seq.window_len() + 1 - k;
    let label = seq.label();
    let scale = F::one() / F::from_usize(t_len).unwrap();
    let gates = p.gates();

    s.dconv.clear();
    s.dconv.resize(s.conv.len(), F::zero());
    let mut dh_next = alloc::vec![F::zero(); d];
    let mut dc_next = alloc::vec![F::zero(); d];
    let mut dh = alloc::vec![F::zero(); d];
    let mut dpre = alloc::vec![F::zero(); gd];
    let mut dz = alloc::vec![F::zero(); d];
    let mut dpooled = alloc::vec![F::zero(); d];
    let mut loss = F::zero();

    for t in (0..t_len).rev() {
        let st = &s.steps[t];
        let (l, dlogits) = loss_and_dlogits(&st.probs, label, scale);
        loss += l;

        dh.copy_from_slice(&dh_next);
        linear_backward_accumulate(
            &st.h,
            p.head.w.data(),
            &dlogits,
            grads.head.w.data_mut(),
            grads.head.b.data_mut(),
            Some(&mut dh),
        );

        for j in 0..d {
            let (f, i, o, cand) = (
                st.gates[j],
                st.gates[d + j],
                st.gates[2 * d + j],
                st.gates[3 * d + j],
            );
            let tc = st.tanh_c[j];
            let d_o = dh[j] * tc;
            let dc = dc_next[j] + dh[j] * o * (F::one() - tc * tc);
            let df = dc * st.c_prev[j];
            let di = dc * cand;
            let dcand = dc * i;
            dc_next[j] = dc * f;
            dpre[j] = df * f * (F::one() - f);
            dpre[d + j] = di * i * (F::one() - i);
            dpre[2 * d + j] = d_o * o * (F::one() - o);
            dpre[3 * d + j] = dcand * (F::one() - cand * cand);
        }

        dh_next.iter_mut().for_each(|v| *v = F::zero());
        let mut grad_paths = grads.gates_mut();
        for (g, path) in gates.iter().enumerate() {
            let gp = &mut grad_paths[g];
            let dp = &dpre[g * d..(g + 1) * d];
            let z = &st.z[g * d..(g + 1) * d];
            for j in 0..d {
                dz[j] = if z[j] > F::zero() { dp[j] } else { F::zero() };
            }
            linear_backward_accumulate(
                &st.h_prev,
                path.lin_w.data(),
                &dz,
                gp.lin_w.data_mut(),
                gp.lin_b.data_mut(),
                Some(&mut dh_next),
            );
            layer_norm_backward_into(
                dp,
                path.ln_gamma.data(),
                &st.ln[g],
                &mut dpooled,
                gp.ln_gamma.data_mut(),
                gp.ln_beta.data_mut(),
            );
            unpool_into(
                &s.conv,
                &mut s.dconv,
                t * seq.stride(),
                out_len,
                gd,
                g * d,
                &dpooled,
            );
        }
    }

    let mut grad_paths = grads.gates_mut();
    conv_backward(&mut grad_paths, d, cfg.channels * k, s);
    loss * scale
}

// ---------------------------------------------------------------------------
// isolated-window CNN

fn cnn_forward<F: Real>(
    p: &CnnParams<F>,
    seq: &WindowSequence<F>,
    s: &mut Scratch<F>,
) -> Result<()> {
    let cfg = p.config;
    let (d, k) = (cfg.hidden, cfg.kernel);
    check_sequence(seq, cfg.channels, k)?;
    conv_forward(seq, &[&p.block], d, k, s);
    let t_len = seq.len();
    ensure_steps(s, t_len, 1, d);
    let out_len = seq.window_len() + 1 - k;
    let eps = c::<F>(LAYER_NORM_EPS);
    let mut pooled = alloc::vec![F::zero(); d];
    for t in 0..t_len {
        let st = &mut s.steps[t];
        pool_into(&s.conv, t * seq.stride(), out_len, d, 0, &mut pooled);
        layer_norm_into(
            &pooled,
            p.block.ln_gamma.data(),
            p.block.ln_beta.data(),
            eps,
            &mut st.feat,
            &mut st.ln[0],
        );
        linear_into(
            &st.feat,
            p.block.lin_w.data(),
            p.block.lin_b.data(),
            &mut st.z,
        );
        for j in 0..d {
            st.h[j] = if st.z[j] > F::zero() {
                st.z[j]
            } else {
                F::zero()
            };
        }
        let mut logits = [F::zero(); 2];
        linear_into(&st.h, p.head.w.data(), p.head.b.data(), &mut logits);
        let mut probs = [F::zero(); 2];
        softmax_into(&logits, &mut probs);
        st.probs = probs;
    }
    Ok(())
}

fn cnn_backward<F: Real>(
    p: &CnnParams<F>,
    seq: &WindowSequence<F>,
    s: &mut Scratch<F>,
    grads: &mut CnnParams<F>,
) -> F {
    let cfg = p.config;
    let (d, k) = (cfg.hidden, cfg.kernel);
    let t_len = seq.len();
    let out_len = seq.window_len() + 1 - k;
    let label = seq.label();
    let scale = F::one() / F::from_usize(t_len).unwrap();
    s.dconv.clear();
    s.dconv.resize(s.conv.len(), F::zero());
    let mut da = alloc::vec![F::zero(); d];
    let mut dfeat = alloc::vec![F::zero(); d];
    let mut dpooled = alloc::vec![F::zero(); d];
    let mut loss = F::zero();
    for t in 0..t_len {
        let st = &s.steps[t];
        let (l, dlogits) = loss_and_dlogits(&st.probs, label, scale);
        loss += l;
        da.iter_mut().for_each(|v| *v = F::zero());
        linear_backward_accumulate(
            &st.h,
            p.head.w.data(),
            &dlogits,
            grads.head.w.data_mut(),
            grads.head.b.data_mut(),
            Some(&mut da),
        );
        for (v, &z) in da.iter_mut().zip(&st.z) {
            if z <= F::zero() {
                *v = F::zero();
            }
        }
        dfeat.iter_mut().for_each(|v| *v = F::zero());
        linear_backward_accumulate(
            &st.feat,
            p.block.lin_w.data(),
            &da,
            grads.block.lin_w.data_mut(),
            grads.block.lin_b.data_mut(),
            Some(&mut dfeat),
        );
        layer_norm_backward_into(
            &dfeat,
            p.block.ln_gamma.data(),
            &st.ln[0],
            &mut dpooled,
            grads.block.ln_gamma.data_mut(),
            grads.block.ln_beta.data_mut(),
        );
        unpool_into(
            &s.conv,
            &mut s.dconv,
            t * seq.stride(),
            out_len,
            d,
            0,
            &dpooled,
        );
    }
    conv_backward(&mut [&mut grads.block], d, cfg.channels * k, s);
    loss * scale
}

// ---------------------------------------------------------------------------

fn collect_probs<F: Real>(s: &Scratch<F>, t_len: usize) -> Result<Tensor<F>> {
    let mut out = Vec::with_capacity(t_len * N_CLASSES);
    for st in &s.steps[..t_len] {
        out.extend_from_slice(&st.probs);
    }
    Tensor::new([t_len, N_CLASSES], out)
}

impl<F: Real> Model<F> {
    fn forward(&self, seq: &WindowSequence<F>, s: &mut Scratch<F>) -> Result<()> {
        match self {
            Model::StreamAad(p) => stream_forward(p, seq, s),
            Model::Cnn(p) => cnn_forward(p, seq, s),
        }
    }

    /// Per-window direction distributions `[T x 2]`. The streaming model
    /// decodes the windows in order from the zero state; the CNN decodes each
    /// window on its own.
    pub fn predict(&self, seq: &WindowSequence<F>, scratch: &mut Scratch<F>) -> Result<Tensor<F>> {
        self.forward(seq, scratch)?;
        collect_probs(scratch, seq.len())
    }

    /// Mean per-window cross-entropy of a sequence against its label, with
    /// the gradient *added* into `grads`. Returns the loss and the `[T x 2]`
    /// predictions.
    pub fn loss_and_grad(
        &self,
        seq: &WindowSequence<F>,
        grads: &mut Model<F>,
        scratch: &mut Scratch<F>,
    ) -> Result<(F, Tensor<F>)> {
        self.forward(seq, scratch)?;
        let loss = match (self, grads) {
            (Model::StreamAad(p), Model::StreamAad(g)) => stream_backward(p, seq, scratch, g),
            (Model::Cnn(p), Model::Cnn(g)) => cnn_backward(p, seq, scratch, g),
            _ => {
                return Err(Error::Consistency(
                    "gradient buffer is for a different model kind".into(),
                ))
            }
        };
        Ok((loss, collect_probs(scratch, seq.len())?))
    }

    /// Mean per-window cross-entropy without gradients.
    pub fn loss(&self, seq: &WindowSequence<F>, scratch: &mut Scratch<F>) -> Result<F> {
        self.forward(seq, scratch)?;
        let label = seq.label();
        let t_len = seq.len();
        let total: F = scratch.steps[..t_len]
            .iter()
            .map(|st| -clamp_prob(st.probs[label as usize]).0.ln())
            .sum();
        Ok(total / F::from_usize(t_len).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Direction, Scenario, TrialMeta};
    use crate::model::cell::{cnn_baseline, decode_sequence};
    use crate::model::gradcheck::{parameter_inputs, random_model, SequenceLossOp};
    use crate::model::params::{ModelConfig, ModelKind, ParamSet};
    use crate::numerics::grad_check;
    use crate::rng;
    use rand::Rng;

    fn random_seq(
        seed: u64,
        t: usize,
        l: usize,
        ch: usize,
        label: Direction,
    ) -> WindowSequence<f64> {
        let stride = l / 2;
        let span = (t - 1) * stride + l;
        let mut r = rng::rng_from(seed);
        let data = (0..span * ch).map(|_| r.random_range(-2.0..2.0)).collect();
        let meta = TrialMeta {
            subject: 0,
            scenario: Scenario::AudioOnly,
            trial: 1,
            label,
        };
        WindowSequence::new(Tensor::new([span, ch], data).unwrap(), l, stride, meta, 0).unwrap()
    }

    const SMALL: ModelConfig = ModelConfig {
        channels: 4,
        hidden: 8,
        kernel: 3,
    };

    #[test]
    fn fused_forward_matches_literal_decode() {
        for seed in 0..5 {
            let m: Model<f64> = Model::init(ModelKind::StreamAad, SMALL, seed);
            let seq = random_seq(100 + seed, 4, 16, 4, Direction::Left);
            let fused = m.predict(&seq, &mut Scratch::new()).unwrap();
            let Model::StreamAad(p) = &m else {
                unreachable!()
            };
            let literal = decode_sequence(&seq, p).unwrap();
            assert!(fused.max_abs_diff(&literal) < 1e-12);
        }
    }

    #[test]
    fn fused_cnn_matches_literal_baseline() {
        let m: Model<f64> = Model::init(ModelKind::Cnn, SMALL, 4);
        let seq = random_seq(5, 3, 16, 4, Direction::Right);
        let fused = m.predict(&seq, &mut Scratch::new()).unwrap();
        let Model::Cnn(p) = &m else { unreachable!() };
        for (t, w) in seq.windows().enumerate() {
            let lit = cnn_baseline(w, p).unwrap();
            assert!((fused.row(t)[0] - lit.data()[0]).abs() < 1e-12);
            assert!((fused.row(t)[1] - lit.data()[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_loss_gradients_match_finite_differences() {
        for kind in [ModelKind::StreamAad, ModelKind::Cnn] {
            for seed in 0..3 {
                let label = if seed % 2 == 0 {
                    Direction::Left
                } else {
                    Direction::Right
                };
                let m = random_model(kind, SMALL, seed);
                let seq = random_seq(200 + seed, 3, 16, 4, label);
                let op = SequenceLossOp {
                    kind,
                    config: SMALL,
                    sequence: &seq,
                };
                let rep = grad_check(&op, &parameter_inputs(&m), 1e-4).unwrap();
                assert!(rep.passed, "{kind:?} seed {seed}: {rep:?}");
            }
        }
    }

    #[test]
    fn gradient_accumulates_across_calls() {
        let m: Model<f64> = Model::init(ModelKind::StreamAad, SMALL, 1);
        let seq = random_seq(3, 3, 16, 4, Direction::Left);
        let mut s = Scratch::new();
        let mut once = m.zeros_like();
        m.loss_and_grad(&seq, &mut once, &mut s).unwrap();
        let mut twice = m.zeros_like();
        m.loss_and_grad(&seq, &mut twice, &mut s).unwrap();
        m.loss_and_grad(&seq, &mut twice, &mut s).unwrap();
        for (a, b) in once.tensors().iter().zip(twice.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_gradient_buffer_is_rejected() {
        let m: Model<f64> = Model::init(ModelKind::StreamAad, SMALL, 1);
        let mut g: Model<f64> = Model::zeros(ModelKind::Cnn, SMALL);
        let seq = random_seq(3, 2, 16, 4, Direction::Left);
        assert!(m.loss_and_grad(&seq, &mut g, &mut Scratch::new()).is_err());
    }
}
