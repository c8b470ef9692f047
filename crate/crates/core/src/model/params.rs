use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;

/// Number of output directions.
pub const N_CLASSES: usize = 2;

/// Channels `C`, hidden size `D` (equal to the conv filter count) and conv
/// kernel length `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub hidden: usize,
    pub kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 32,
            hidden: 32,
            kernel: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel == 0 {
            return Err(Error::invalid("channels and kernel must be positive"));
        }
        if self.hidden < 2 {
            return Err(Error::invalid(
                "hidden size must be at least 2 for LayerNorm",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "streamaad")]
    StreamAad,
    #[serde(rename = "cnn")]
    Cnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::StreamAad => "streamaad",
            ModelKind::Cnn => "cnn",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            ModelKind::StreamAad => 0,
            ModelKind::Cnn => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::StreamAad),
            1 => Some(ModelKind::Cnn),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "streamaad" => Some(ModelKind::StreamAad),
            "cnn" => Some(ModelKind::Cnn),
            _ => None,
        }
    }
}

/// Access to a parameter set as an ordered list of named tensors. The order
/// is fixed and is the order used by checkpoints and the optimizer.
pub trait ParamSet<F: Real> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<F>)>;

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>>;

    fn tensors(&self) -> Vec<&Tensor<F>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn scalar_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_all(&mut self) {
        for t in self.tensors_mut() {
            t.fill(F::zero());
        }
    }
}

/// Conv block + linear block feeding one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GatePath<F> {
    /// `[D x C x K]`
    pub conv_w: Tensor<F>,
    pub conv_b: Tensor<F>,
    pub ln_gamma: Tensor<F>,
    pub ln_beta: Tensor<F>,
    /// `[D x D]`
    pub lin_w: Tensor<F>,
    pub lin_b: Tensor<F>,
}

impl<F: Real> GatePath<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (c, d, k) = (cfg.channels, cfg.hidden, cfg.kernel);
        GatePath {
            conv_w: Tensor::zeros([d, c, k]),
            conv_b: Tensor::zeros([d]),
            ln_gamma: Tensor::zeros([d]),
            ln_beta: Tensor::zeros([d]),
            lin_w: Tensor::zeros([d, d]),
            lin_b: Tensor::zeros([d]),
        }
    }

    fn random(cfg: &ModelConfig, r: &mut ChaCha8Rng) -> Self {
        let mut g = Self::zeros(cfg);
        fill_uniform(&mut g.conv_w, cfg.channels * cfg.kernel, r);
        fill_uniform(&mut g.lin_w, cfg.hidden, r);
        g.ln_gamma.fill(F::one());
        g
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<F>)>) {
        out.push((format!("{prefix}.conv.weight"), &self.conv_w));
        out.push((format!("{prefix}.conv.bias"), &self.conv_b));
        out.push((format!("{prefix}.norm.gamma"), &self.ln_gamma));
        out.push((format!("{prefix}.norm.beta"), &self.ln_beta));
        out.push((format!("{prefix}.linear.weight"), &self.lin_w));
        out.push((format!("{prefix}.linear.bias"), &self.lin_b));
    }

    fn push_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<F>>) {
        out.push(&mut self.conv_w);
        out.push(&mut self.conv_b);
        out.push(&mut self.ln_gamma);
        out.push(&mut self.ln_beta);
        out.push(&mut self.lin_w);
        out.push(&mut self.lin_b);
    }
}

/// Output projection `[2 x D]` + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> Head<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Head {
            w: Tensor::zeros([N_CLASSES, cfg.hidden]),
            b: Tensor::zeros([N_CLASSES]),
        }
    }

    fn random(cfg: &ModelConfig, r: &mut ChaCha8Rng) -> Self {
        let mut h = Self::zeros(cfg);
        fill_uniform(&mut h.w, cfg.hidden, r);
        h
    }
}

/// Weights of the streaming decoder: forget, input, output and candidate
/// gate paths plus the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamAadParams<F> {
    pub config: ModelConfig,
    pub forget: GatePath<F>,
    pub input: GatePath<F>,
    pub output: GatePath<F>,
    pub candidate: GatePath<F>,
    pub head: Head<F>,
}

impl<F: Real> StreamAadParams<F> {
    pub fn zeros(config: ModelConfig) -> Self {
        StreamAadParams {
            config,
            forget: GatePath::zeros(&config),
            input: GatePath::zeros(&config),
            output: GatePath::zeros(&config),
            candidate: GatePath::zeros(&config),
            head: Head::zeros(&config),
        }
    }

    /// Gate paths in `f, i, o, c~` order.
    pub fn gates(&self) -> [&GatePath<F>; 4] {
        [&self.forget, &self.input, &self.output, &self.candidate]
    }

    pub fn gates_mut(&mut self) -> [&mut GatePath<F>; 4] {
        [
            &mut self.forget,
            &mut self.input,
            &mut self.output,
            &mut self.candidate,
        ]
    }
}

impl<F: Real> ParamSet<F> for StreamAadParams<F> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::with_capacity(26);
        self.forget.push_named("forget", &mut out);
        self.input.push_named("input", &mut out);
        self.output.push_named("output", &mut out);
        self.candidate.push_named("candidate", &mut out);
        out.push(("head.weight".into(), &self.head.w));
        out.push(("head.bias".into(), &self.head.b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::with_capacity(26);
        self.forget.push_mut(&mut out);
        self.input.push_mut(&mut out);
        self.output.push_mut(&mut out);
        self.candidate.push_mut(&mut out);
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }
}

/// Isolated-window baseline: one conv block, one linear block, the head.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<F> {
    pub config: ModelConfig,
    pub block: GatePath<F>,
    pub head: Head<F>,
}

impl<F: Real> CnnParams<F> {
    pub fn zeros(config: ModelConfig) -> Self {
        CnnParams {
            config,
            block: GatePath::zeros(&config),
            head: Head::zeros(&config),
        }
    }
}

impl<F: Real> ParamSet<F> for CnnParams<F> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::with_capacity(8);
        self.block.push_named("block", &mut out);
        out.push(("head.weight".into(), &self.head.w));
        out.push(("head.bias".into(), &self.head.b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::with_capacity(8);
        self.block.push_mut(&mut out);
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }
}

fn fill_uniform<F: Real>(t: &mut Tensor<F>, fan_in: usize, r: &mut ChaCha8Rng) {
    let bound = num_traits::Float::sqrt(1.0 / fan_in as f64);
    for v in t.data_mut() {
        *v = F::from_f64_lossy(r.random_range(-bound..bound));
    }
}

/// Weights uniform in `+-sqrt(1/fan_in)`, biases and LayerNorm shifts zero,
/// LayerNorm scales one. Draw order: forget, input, output, candidate paths
/// (conv then linear weights), then the head.
pub fn init_params<F: Real>(seed: u64, config: ModelConfig) -> StreamAadParams<F> {
    let mut r = rng::rng_from(seed);
    StreamAadParams {
        config,
        forget: GatePath::random(&config, &mut r),
        input: GatePath::random(&config, &mut r),
        output: GatePath::random(&config, &mut r),
        candidate: GatePath::random(&config, &mut r),
        head: Head::random(&config, &mut r),
    }
}

pub fn init_cnn_params<F: Real>(seed: u64, config: ModelConfig) -> CnnParams<F> {
    let mut r = rng::rng_from(seed);
    CnnParams {
        config,
        block: GatePath::random(&config, &mut r),
        head: Head::random(&config, &mut r),
    }
}

/// Either decoder, as handled by training, checkpoints and evaluation.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model<F> {
    StreamAad(StreamAadParams<F>),
    Cnn(CnnParams<F>),
}

impl<F: Real> Model<F> {
    pub fn init(kind: ModelKind, config: ModelConfig, seed: u64) -> Self {
        match kind {
            ModelKind::StreamAad => Model::StreamAad(init_params(seed, config)),
            ModelKind::Cnn => Model::Cnn(init_cnn_params(seed, config)),
        }
    }

    pub fn zeros(kind: ModelKind, config: ModelConfig) -> Self {
        match kind {
            ModelKind::StreamAad => Model::StreamAad(StreamAadParams::zeros(config)),
            ModelKind::Cnn => Model::Cnn(CnnParams::zeros(config)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::StreamAad(_) => ModelKind::StreamAad,
            Model::Cnn(_) => ModelKind::Cnn,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::StreamAad(p) => p.config,
            Model::Cnn(p) => p.config,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind(), self.config())
    }

    /// The same parameters in another precision.
    pub fn cast<G: Real>(&self) -> Model<G> {
        let tensors = self.tensors().into_iter().map(|t| t.cast()).collect();
        Model::from_tensors(self.kind(), self.config(), tensors).expect("identical layout")
    }

    /// Rebuilds a model from tensors in [`ParamSet`] order, checking shapes.
    pub fn from_tensors(
        kind: ModelKind,
        config: ModelConfig,
        tensors: Vec<Tensor<F>>,
    ) -> Result<Self> {
        let mut m = Self::zeros(kind, config);
        let slots = m.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Consistency(format!(
                "{} expects {} tensors, got {}",
                kind.name(),
                slots.len(),
                tensors.len()
            )));
        }
        for (i, (slot, t)) in slots.into_iter().zip(tensors).enumerate() {
            if slot.shape() != t.shape() {
                return Err(Error::Consistency(format!(
                    "tensor {i}: shape {:?} does not match expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(m)
    }
}

impl<F: Real> ParamSet<F> for Model<F> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        match self {
            Model::StreamAad(p) => p.named_tensors(),
            Model::Cnn(p) => p.named_tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Model::StreamAad(p) => p.tensors_mut(),
            Model::Cnn(p) => p.tensors_mut(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig::default();
        let a: StreamAadParams<f32> = init_params(1, cfg);
        let b: StreamAadParams<f32> = init_params(1, cfg);
        let c: StreamAadParams<f32> = init_params(2, cfg);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bits = |p: &StreamAadParams<f32>| -> Vec<u32> {
            p.tensors()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn init_ranges_and_fixed_entries() {
        let cfg = ModelConfig::default();
        let p: StreamAadParams<f64> = init_params(9, cfg);
        let conv_bound = (1.0f64 / (32.0 * 7.0)).sqrt();
        let lin_bound = (1.0f64 / 32.0).sqrt();
        for g in p.gates() {
            assert!(g.conv_w.data().iter().all(|v| v.abs() <= conv_bound));
            assert!(g.lin_w.data().iter().all(|v| v.abs() <= lin_bound));
            assert!(g.conv_b.data().iter().all(|&v| v == 0.0));
            assert!(g.lin_b.data().iter().all(|&v| v == 0.0));
            assert!(g.ln_gamma.data().iter().all(|&v| v == 1.0));
            assert!(g.ln_beta.data().iter().all(|&v| v == 0.0));
        }
        assert!(p.head.b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tensor_order_is_stable_and_round_trips() {
        let cfg = ModelConfig {
            channels: 2,
            hidden: 3,
            kernel: 2,
        };
        let m: Model<f64> = Model::init(ModelKind::StreamAad, cfg, 5);
        let names: Vec<String> = m.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 26);
        assert_eq!(names[0], "forget.conv.weight");
        assert_eq!(names[25], "head.bias");
        let rebuilt = Model::from_tensors(
            ModelKind::StreamAad,
            cfg,
            m.tensors().into_iter().cloned().collect(),
        )
        .unwrap();
        assert_eq!(rebuilt, m);
        let mut wrong: Vec<Tensor<f64>> = m.tensors().into_iter().cloned().collect();
        wrong[3] = Tensor::zeros([5]);
        assert!(Model::from_tensors(ModelKind::StreamAad, cfg, wrong).is_err());
    }
}
