use alloc::vec::Vec;

use super::params::{CnnParams, GatePath, Head, StreamAadParams};
use super::window::{DecisionWindow, WindowSequence};
use crate::error::{Error, Result};
use crate::numerics::{self, LAYER_NORM_EPS};
use crate::real::{c, Real};
use crate::tensor::Tensor;

/// Long-term (`c`) and short-term (`h`) state carried between windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<F> {
    pub c: Tensor<F>,
    pub h: Tensor<F>,
}

impl<F: Real> CellState<F> {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            c: Tensor::zeros([hidden]),
            h: Tensor::zeros([hidden]),
        }
    }
}

/// `layer_norm(global_avg_pool(relu(conv1d_valid(e^T))))` on one window.
pub fn conv_block<F: Real>(window: DecisionWindow<'_, F>, gate: &GatePath<F>) -> Result<Tensor<F>> {
    let x = window.transposed();
    let conv = numerics::conv1d_valid(&x, &gate.conv_w, &gate.conv_b)?;
    let pooled = numerics::global_avg_pool(&numerics::relu(&conv))?;
    numerics::layer_norm(&pooled, &gate.ln_gamma, &gate.ln_beta, c(LAYER_NORM_EPS))
}

/// `relu(W h + b)`.
pub fn linear_block<F: Real>(h: &Tensor<F>, gate: &GatePath<F>) -> Result<Tensor<F>> {
    Ok(numerics::relu(&numerics::linear(
        h,
        &gate.lin_w,
        &gate.lin_b,
    )?))
}

fn head_probs<F: Real>(h: &Tensor<F>, head: &Head<F>) -> Result<Tensor<F>> {
    numerics::softmax(&numerics::linear(h, &head.w, &head.b)?)
}

fn gate_preactivation<F: Real>(
    window: DecisionWindow<'_, F>,
    h_prev: &Tensor<F>,
    gate: &GatePath<F>,
) -> Result<Tensor<F>> {
    let mut pre = conv_block(window, gate)?;
    pre.axpy(F::one(), &linear_block(h_prev, gate)?)?;
    Ok(pre)
}

/// One streaming step: gates from the current window and the previous
/// short-term state, then the cell update and the per-window output.
pub fn cell_step<F: Real>(
    window: DecisionWindow<'_, F>,
    prev: &CellState<F>,
    params: &StreamAadParams<F>,
) -> Result<(CellState<F>, Tensor<F>)> {
    let d = params.config.hidden;
    Error::check_dim("cell_step", "previous long-term state", d, prev.c.len())?;
    Error::check_dim("cell_step", "previous short-term state", d, prev.h.len())?;
    Error::check_dim(
        "cell_step",
        "window channels",
        params.config.channels,
        window.channels(),
    )?;

    let f = numerics::sigmoid(&gate_preactivation(window, &prev.h, &params.forget)?);
    let i = numerics::sigmoid(&gate_preactivation(window, &prev.h, &params.input)?);
    let o = numerics::sigmoid(&gate_preactivation(window, &prev.h, &params.output)?);
    let cand = numerics::tanh(&gate_preactivation(window, &prev.h, &params.candidate)?);

    let mut c_new = Vec::with_capacity(d);
    let mut h_new = Vec::with_capacity(d);
    for j in 0..d {
        let cj = f.data()[j] * prev.c.data()[j] + i.data()[j] * cand.data()[j];
        c_new.push(cj);
        h_new.push(cj.tanh() * o.data()[j]);
    }
    let state = CellState {
        c: Tensor::vector(c_new),
        h: Tensor::vector(h_new),
    };
    let p = head_probs(&state.h, &params.head)?;
    Ok((state, p))
}

/// Decodes a sequence in order from the zero state; row `t` of the result
/// is the direction distribution for window `t`.
pub fn decode_sequence<F: Real>(
    seq: &WindowSequence<F>,
    params: &StreamAadParams<F>,
) -> Result<Tensor<F>> {
    if seq.is_empty() {
        return Err(Error::invalid("decode_sequence: empty sequence"));
    }
    let mut state = CellState::zeros(params.config.hidden);
    let mut out = Vec::with_capacity(seq.len() * 2);
    for window in seq.windows() {
        let (next, p) = cell_step(window, &state, params)?;
        out.extend_from_slice(p.data());
        state = next;
    }
    Tensor::new([seq.len(), 2], out)
}

/// Isolated-window decoding: `softmax(head(linear_block(conv_block(e))))`.
pub fn cnn_baseline<F: Real>(
    window: DecisionWindow<'_, F>,
    params: &CnnParams<F>,
) -> Result<Tensor<F>> {
    Error::check_dim(
        "cnn_baseline",
        "window channels",
        params.config.channels,
        window.channels(),
    )?;
    let feat = conv_block(window, &params.block)?;
    head_probs(&linear_block(&feat, &params.block)?, &params.head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Direction, Scenario, TrialMeta};
    use crate::model::params::{init_cnn_params, init_params, ModelConfig};
    use crate::rng;
    use rand::Rng;

    fn meta() -> TrialMeta {
        TrialMeta {
            subject: 0,
            scenario: Scenario::AudioOnly,
            trial: 1,
            label: Direction::Left,
        }
    }

    fn random_seq(seed: u64, t: usize, l: usize, ch: usize) -> WindowSequence<f64> {
        let stride = l / 2;
        let span = (t - 1) * stride + l;
        let mut r = rng::rng_from(seed);
        let data = (0..span * ch).map(|_| r.random_range(-3.0..3.0)).collect();
        WindowSequence::new(Tensor::new([span, ch], data).unwrap(), l, stride, meta(), 0).unwrap()
    }

    #[test]
    fn zero_network_is_symmetric() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        let p = StreamAadParams::<f64>::zeros(cfg);
        let seq = random_seq(1, 3, 16, 4);
        let (s, probs) = cell_step(seq.window(0), &CellState::zeros(8), &p).unwrap();
        assert_eq!(probs.data(), &[0.5, 0.5]);
        assert!(s.c.data().iter().all(|&v| v == 0.0));
        assert!(s.h.data().iter().all(|&v| v == 0.0));
        let out = decode_sequence(&seq, &p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_network_halves_long_term_state() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        let p = StreamAadParams::<f64>::zeros(cfg);
        let seq = random_seq(2, 1, 16, 4);
        let c0: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let prev = CellState {
            c: Tensor::vector(c0.clone()),
            h: Tensor::zeros([8]),
        };
        let (s, _) = cell_step(seq.window(0), &prev, &p).unwrap();
        for (a, b) in s.c.data().iter().zip(&c0) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn conv_block_zero_weights_gives_beta() {
        let cfg = ModelConfig {
            channels: 32,
            hidden: 32,
            kernel: 7,
        };
        let mut g = GatePath::<f64>::zeros(&cfg);
        g.ln_gamma.fill(1.0);
        let w = Tensor::<f64>::full([128, 32], 0.3);
        let out = conv_block(DecisionWindow::from_tensor(&w).unwrap(), &g).unwrap();
        assert_eq!(out.shape(), &[32]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_block_linear_in_gamma() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        let p: StreamAadParams<f64> = init_params(3, cfg);
        let seq = random_seq(4, 1, 16, 4);
        let base = conv_block(seq.window(0), &p.forget).unwrap();
        let mut g2 = p.forget.clone();
        g2.ln_gamma.scale(2.0);
        let doubled = conv_block(seq.window(0), &g2).unwrap();
        for (a, b) in base.data().iter().zip(doubled.data()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_block_examples() {
        let cfg = ModelConfig {
            channels: 1,
            hidden: 3,
            kernel: 1,
        };
        let mut g = GatePath::<f64>::zeros(&cfg);
        assert!(linear_block(&Tensor::zeros([3]), &g)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        g.lin_w = Tensor::from_f64([3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let h = Tensor::from_f64([3], &[0.2, 0.5, 0.9]).unwrap();
        assert_eq!(linear_block(&h, &g).unwrap(), h);
        let neg = Tensor::from_f64([3], &[-0.2, 0.5, -0.9]).unwrap();
        assert_eq!(linear_block(&neg, &g).unwrap().data(), &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn random_params_keep_state_bounded() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        for seed in 0..5 {
            let mut p: StreamAadParams<f64> = init_params(seed, cfg);
            // Larger head/linear weights to stress the bounds.
            for g in p.gates_mut() {
                g.lin_w.scale(5.0);
                g.ln_gamma.scale(4.0);
            }
            let seq = random_seq(seed + 10, 5, 16, 4);
            let mut s = CellState::zeros(8);
            for w in seq.windows() {
                let (next, probs) = cell_step(w, &s, &p).unwrap();
                assert!(next.h.data().iter().all(|v| v.abs() < 1.0));
                assert!((probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                s = next;
            }
        }
    }

    #[test]
    fn single_window_decode_equals_one_step() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        let p: StreamAadParams<f64> = init_params(7, cfg);
        let seq = random_seq(8, 1, 16, 4);
        let (_, probs) = cell_step(seq.window(0), &CellState::zeros(8), &p).unwrap();
        assert_eq!(decode_sequence(&seq, &p).unwrap().data(), probs.data());
    }

    #[test]
    fn cnn_outputs_distribution() {
        let cfg = ModelConfig {
            channels: 4,
            hidden: 8,
            kernel: 3,
        };
        let seq = random_seq(11, 1, 16, 4);
        let zero = CnnParams::<f64>::zeros(cfg);
        assert_eq!(
            cnn_baseline(seq.window(0), &zero).unwrap().data(),
            &[0.5, 0.5]
        );
        let p: CnnParams<f64> = init_cnn_params(3, cfg);
        let probs = cnn_baseline(seq.window(0), &p).unwrap();
        assert!((probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let cfg = ModelConfig {
            channels: 5,
            hidden: 8,
            kernel: 3,
        };
        let p = StreamAadParams::<f64>::zeros(cfg);
        let seq = random_seq(1, 1, 16, 4);
        assert!(matches!(
            cell_step(seq.window(0), &CellState::zeros(8), &p),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
