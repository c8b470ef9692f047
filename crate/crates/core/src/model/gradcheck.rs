use alloc::string::String;
use alloc::vec::Vec;

use super::fast::Scratch;
use super::params::{Model, ModelConfig, ModelKind, ParamSet};
use super::window::WindowSequence;
use crate::error::Result;
use crate::numerics::DifferentiableOp;
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;

/// The mean sequence loss as a function of every parameter tensor, so the
/// whole backward pass (through all time steps) can be finite-difference
/// checked. Inputs are the parameter tensors in [`ParamSet`] order.
pub struct SequenceLossOp<'a> {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub sequence: &'a WindowSequence<f64>,
}

impl DifferentiableOp<f64> for SequenceLossOp<'_> {
    fn name(&self) -> String {
        alloc::format!("{}-sequence-loss", self.kind.name())
    }

    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        let m = Model::from_tensors(self.kind, self.config, inputs.to_vec())?;
        Ok(Tensor::scalar(m.loss(self.sequence, &mut Scratch::new())?))
    }

    fn backward(
        &self,
        inputs: &[Tensor<f64>],
        _output: &Tensor<f64>,
        upstream: &Tensor<f64>,
    ) -> Result<Vec<Tensor<f64>>> {
        let m = Model::from_tensors(self.kind, self.config, inputs.to_vec())?;
        let mut grads = m.zeros_like();
        m.loss_and_grad(self.sequence, &mut grads, &mut Scratch::new())?;
        let scale = upstream.data()[0];
        let mut out: Vec<Tensor<f64>> = grads.tensors().into_iter().cloned().collect();
        for t in &mut out {
            t.scale(scale);
        }
        Ok(out)
    }
}

/// Parameter tensors of a model as owned grad-check inputs.
pub fn parameter_inputs(model: &Model<f64>) -> Vec<Tensor<f64>> {
    model.tensors().into_iter().cloned().collect()
}

/// A model with every entry (biases and norm parameters included) drawn at
/// random. Freshly initialized models sit exactly on ReLU kinks (zero bias,
/// zero initial state), where finite differences are meaningless.
pub fn random_model(kind: ModelKind, config: ModelConfig, seed: u64) -> Model<f64> {
    let mut m = Model::zeros(kind, config);
    let names: Vec<String> = m.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut r = rng::rng_from(seed);
    for (name, t) in names.iter().zip(m.tensors_mut()) {
        let centre = if name.ends_with("gamma") { 1.0 } else { 0.0 };
        for v in t.data_mut() {
            *v = centre + r.random_range(-0.5..0.5);
        }
    }
    m
}
