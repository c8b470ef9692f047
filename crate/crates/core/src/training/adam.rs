use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new<P: ParamSet<F> + ?Sized>(params: &P) -> Self {
        let zeros = || {
            params
                .tensors()
                .into_iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` from `grads`.
pub fn adam_step<F: Real, P: ParamSet<F> + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<F>,
    hp: &AdamHyper,
) -> Result<()> {
    let g = grads.tensors();
    let p = params.tensors_mut();
    if p.len() != g.len() || p.len() != state.m.len() {
        return Err(Error::Consistency(format!(
            "adam: {} parameter tensors, {} gradients, {} moment slots",
            p.len(),
            g.len(),
            state.m.len()
        )));
    }
    for (i, (pt, gt)) in p.iter().zip(&g).enumerate() {
        Error::check_dim("adam", "tensor length", pt.len(), gt.len())?;
        Error::check_dim("adam", "tensor length", pt.len(), state.m[i].len())?;
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64_lossy(hp.beta1);
    let b2 = F::from_f64_lossy(hp.beta2);
    let one = F::one();
    let c1 = F::from_f64_lossy(1.0 - hp.beta1.powi(t));
    let c2 = F::from_f64_lossy(1.0 - hp.beta2.powi(t));
    let lr = F::from_f64_lossy(hp.lr);
    let eps = F::from_f64_lossy(hp.eps);
    for (i, (pt, gt)) in p.into_iter().zip(g).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gr), mi), vi) in pt.data_mut().iter_mut().zip(gt.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (one - b1) * gr;
            *vi = b2 * *vi + (one - b2) * gr * gr;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig, ModelKind};

    fn tiny() -> Model<f64> {
        Model::init(
            ModelKind::Cnn,
            ModelConfig {
                channels: 2,
                hidden: 3,
                kernel: 2,
            },
            5,
        )
    }

    fn filled(m: &Model<f64>, f: impl Fn(usize) -> f64) -> Model<f64> {
        let mut g = m.zeros_like();
        let mut k = 0;
        for t in g.tensors_mut() {
            for v in t.data_mut() {
                *v = f(k);
                k += 1;
            }
        }
        g
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut p = tiny();
        let before = p.clone();
        let g = filled(&p, |_| 1.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
        assert_eq!(st.t, 1);
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradient_or_rate_leaves_params() {
        let mut p = tiny();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
        }
        assert_eq!(p, before);
        let g = filled(&p, |k| k as f64 - 3.0);
        adam_step(&mut p, &g, &mut st, &AdamHyper::with_lr(0.0)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_ignores_gradient_scale() {
        let mut p = tiny();
        let before = p.clone();
        let g = filled(&p, |k| if k % 2 == 0 { 0.3 } else { 0.6 });
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamHyper::default()).unwrap();
        let steps: Vec<f64> = p
            .tensors()
            .iter()
            .zip(before.tensors())
            .flat_map(|(a, b)| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| x - y)
                    .collect::<Vec<_>>()
            })
            .collect();
        for s in steps {
            assert!((s + 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut p = tiny();
        let g = Model::<f64>::zeros(
            ModelKind::Cnn,
            ModelConfig {
                channels: 2,
                hidden: 4,
                kernel: 2,
            },
        );
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut st, &AdamHyper::default()).is_err());
    }
}
