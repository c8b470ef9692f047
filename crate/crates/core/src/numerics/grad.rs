use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::ops;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;

/// A function of several tensors with an analytic reverse-mode rule.
///
/// `backward` receives the inputs, the forward output and the gradient of a
/// scalar objective with respect to that output, and returns one gradient per
/// input with the input's shape.
pub trait DifferentiableOp<F: Real> {
    fn name(&self) -> String;

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>>;

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        output: &Tensor<F>,
        upstream: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>>;
}

fn arity<F: Real>(name: &str, inputs: &[Tensor<F>], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::invalid(format!(
            "{name}: expected {n} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

/// Inputs: `x [cin x len]`, `w [cout x cin x k]`, `b [cout]`.
pub struct Conv1dValidOp;

impl<F: Real> DifferentiableOp<F> for Conv1dValidOp {
    fn name(&self) -> String {
        "conv1d_valid".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("conv1d_valid", inputs, 3)?;
        ops::conv1d_valid(&inputs[0], &inputs[1], &inputs[2])
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("conv1d_valid", inputs, 3)?;
        let g = ops::conv1d_valid_backward(&inputs[0], &inputs[1], &inputs[2], up, true)?;
        Ok(vec![g.dx.expect("requested"), g.dw, g.db])
    }
}

/// Inputs: `x [din]`, `w [dout x din]`, `b [dout]`.
pub struct LinearOp;

impl<F: Real> DifferentiableOp<F> for LinearOp {
    fn name(&self) -> String {
        "linear".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("linear", inputs, 3)?;
        ops::linear(&inputs[0], &inputs[1], &inputs[2])
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("linear", inputs, 3)?;
        let (dx, dw, db) = ops::linear_backward(&inputs[0], &inputs[1], &inputs[2], up)?;
        Ok(vec![dx, dw, db])
    }
}

/// Inputs: `x [d]`, `gamma [d]`, `beta [d]`.
pub struct LayerNormOp<F> {
    pub eps: F,
}

impl<F: Real> DifferentiableOp<F> for LayerNormOp<F> {
    fn name(&self) -> String {
        "layer_norm".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("layer_norm", inputs, 3)?;
        ops::layer_norm(&inputs[0], &inputs[1], &inputs[2], self.eps)
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("layer_norm", inputs, 3)?;
        let (dx, dg, db) =
            ops::layer_norm_backward(&inputs[0], &inputs[1], &inputs[2], self.eps, up)?;
        Ok(vec![dx, dg, db])
    }
}

pub struct GlobalAvgPoolOp;

impl<F: Real> DifferentiableOp<F> for GlobalAvgPoolOp {
    fn name(&self) -> String {
        "global_avg_pool".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("global_avg_pool", inputs, 1)?;
        ops::global_avg_pool(&inputs[0])
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("global_avg_pool", inputs, 1)?;
        Ok(vec![ops::global_avg_pool_backward(&inputs[0], up)?])
    }
}

pub struct SigmoidOp;

impl<F: Real> DifferentiableOp<F> for SigmoidOp {
    fn name(&self) -> String {
        "sigmoid".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("sigmoid", inputs, 1)?;
        Ok(ops::sigmoid(&inputs[0]))
    }

    fn backward(&self, _: &[Tensor<F>], out: &Tensor<F>, up: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        Ok(vec![ops::sigmoid_backward(out, up)])
    }
}

pub struct TanhOp;

impl<F: Real> DifferentiableOp<F> for TanhOp {
    fn name(&self) -> String {
        "tanh".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("tanh", inputs, 1)?;
        Ok(ops::tanh(&inputs[0]))
    }

    fn backward(&self, _: &[Tensor<F>], out: &Tensor<F>, up: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        Ok(vec![ops::tanh_backward(out, up)])
    }
}

pub struct ReluOp;

impl<F: Real> DifferentiableOp<F> for ReluOp {
    fn name(&self) -> String {
        "relu".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("relu", inputs, 1)?;
        Ok(ops::relu(&inputs[0]))
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("relu", inputs, 1)?;
        Ok(vec![ops::relu_backward(&inputs[0], up)])
    }
}

pub struct SoftmaxOp;

impl<F: Real> DifferentiableOp<F> for SoftmaxOp {
    fn name(&self) -> String {
        "softmax".into()
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("softmax", inputs, 1)?;
        ops::softmax(&inputs[0])
    }

    fn backward(&self, _: &[Tensor<F>], out: &Tensor<F>, up: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        Ok(vec![ops::softmax_backward(out, up)])
    }
}

/// Input: a probability pair; output: the scalar loss as a 1-element tensor.
pub struct CrossEntropyOp {
    pub label: u8,
}

impl<F: Real> DifferentiableOp<F> for CrossEntropyOp {
    fn name(&self) -> String {
        format!("cross_entropy(y={})", self.label)
    }

    fn forward(&self, inputs: &[Tensor<F>]) -> Result<Tensor<F>> {
        arity("cross_entropy", inputs, 1)?;
        Ok(Tensor::scalar(ops::cross_entropy(&inputs[0], self.label)?))
    }

    fn backward(
        &self,
        inputs: &[Tensor<F>],
        _: &Tensor<F>,
        up: &Tensor<F>,
    ) -> Result<Vec<Tensor<F>>> {
        arity("cross_entropy", inputs, 1)?;
        let mut g = ops::cross_entropy_backward(&inputs[0], self.label)?;
        g.scale(up.data()[0]);
        Ok(vec![g])
    }
}

/// Denominator floor of the relative error, so that gradients at the level of
/// finite-difference noise are compared absolutely.
pub const GRAD_CHECK_REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    /// `(input index, flat element index)` of the worst element.
    pub worst: (usize, usize),
    pub elements_checked: usize,
    pub passed: bool,
}

/// Compares the analytic backward of `op` against central finite differences
/// on every input element, in double precision.
///
/// The scalar objective is `sum(r * op(inputs))` for a fixed pseudo-random
/// projection `r`, so every output element contributes. The step is
/// `1e-5 * max(1, |x|)`. Relative error is
/// `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_REL_FLOOR)`.
pub fn grad_check(
    op: &dyn DifferentiableOp<f64>,
    inputs: &[Tensor<f64>],
    tolerance: f64,
) -> Result<GradCheckReport> {
    let out = op.forward(inputs)?;
    let mut r = rng::rng_from(0x6AD_C4EC);
    let proj: Vec<f64> = (0..out.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let upstream = Tensor::new(out.shape().to_vec(), proj.clone())?;
    let analytic = op.backward(inputs, &out, &upstream)?;
    if analytic.len() != inputs.len() {
        return Err(Error::Consistency(format!(
            "{}: backward returned {} gradients for {} inputs",
            op.name(),
            analytic.len(),
            inputs.len()
        )));
    }

    let objective = |xs: &[Tensor<f64>]| -> Result<f64> {
        let y = op.forward(xs)?;
        Ok(y.data().iter().zip(&proj).map(|(a, b)| a * b).sum())
    };

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut worst = (0, 0);
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    for (i, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[i].shape() {
            return Err(Error::Consistency(format!(
                "{}: gradient {i} has shape {:?}, input has {:?}",
                op.name(),
                grad.shape(),
                inputs[i].shape()
            )));
        }
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            let h = 1e-5 * x0.abs().max(1.0);
            work[i].data_mut()[j] = x0 + h;
            let up = objective(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = objective(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[j];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_REL_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel || rel.is_nan() {
                max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = (i, j);
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        op: op.name(),
        max_rel_error: max_rel,
        worst,
        elements_checked: checked,
        passed: max_rel < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::LAYER_NORM_EPS;
    use rand_chacha::ChaCha8Rng;

    fn random(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn check_many(
        op: &dyn DifferentiableOp<f64>,
        make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    ) {
        let mut r = rng::rng_from(42);
        for _ in 0..10 {
            let inputs = make(&mut r);
            let rep = grad_check(op, &inputs, 1e-4).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn conv1d_gradients() {
        check_many(&Conv1dValidOp, |r| {
            vec![random(r, &[2, 8]), random(r, &[3, 2, 3]), random(r, &[3])]
        });
    }

    #[test]
    fn linear_gradients() {
        check_many(&LinearOp, |r| {
            vec![random(r, &[5]), random(r, &[4, 5]), random(r, &[4])]
        });
    }

    #[test]
    fn layer_norm_gradients() {
        let op = LayerNormOp {
            eps: LAYER_NORM_EPS,
        };
        check_many(&op, |r| {
            vec![random(r, &[16]), random(r, &[16]), random(r, &[16])]
        });
    }

    #[test]
    fn pool_and_activation_gradients() {
        check_many(&GlobalAvgPoolOp, |r| vec![random(r, &[3, 7])]);
        check_many(&SigmoidOp, |r| vec![random(r, &[9])]);
        check_many(&TanhOp, |r| vec![random(r, &[9])]);
        check_many(&ReluOp, |r| vec![random(r, &[9])]);
        check_many(&SoftmaxOp, |r| vec![random(r, &[6])]);
    }

    #[test]
    fn cross_entropy_gradients() {
        for label in 0..2 {
            check_many(&CrossEntropyOp { label }, |r| {
                let p: f64 = r.random_range(0.05..0.95);
                vec![Tensor::from_f64([2], &[1.0 - p, p]).unwrap()]
            });
        }
    }

    struct BrokenSquare;

    impl DifferentiableOp<f64> for BrokenSquare {
        fn name(&self) -> String {
            "broken".into()
        }
        fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
            Ok(inputs[0].map(|v| v * v))
        }
        fn backward(
            &self,
            inputs: &[Tensor<f64>],
            _: &Tensor<f64>,
            up: &Tensor<f64>,
        ) -> Result<Vec<Tensor<f64>>> {
            // Missing the factor 2.
            let mut g = inputs[0].clone();
            for (a, b) in g.data_mut().iter_mut().zip(up.data()) {
                *a *= b;
            }
            Ok(vec![g])
        }
    }

    #[test]
    fn wrong_backward_is_reported() {
        let x = Tensor::from_f64([3], &[0.3, -0.7, 1.1]).unwrap();
        let rep = grad_check(&BrokenSquare, &[x], 1e-4).unwrap();
        assert!(!rep.passed);
        assert!((rep.max_rel_error - 0.5).abs() < 1e-6);
    }
}
