//! Parameter and multiply-accumulate accounting.
//!
//! MACs count the multiplies of the convolution and linear layers only;
//! pooling, normalization and activations are excluded. Under this
//! convention a 9-window, 128-sample, 32-channel segment costs 31,519,296
//! MACs for the streaming decoder with `C = D = 32`, `K = 7`.

use alloc::format;

use super::params::{ModelConfig, ModelKind, ParamSet, N_CLASSES};
use crate::error::{Error, Result};
use crate::real::Real;

/// Input of one decode: `windows x samples-per-window x channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub windows: usize,
    pub samples: usize,
    pub channels: usize,
}

pub fn count_params<F: Real>(params: &impl ParamSet<F>) -> usize {
    params.scalar_count()
}

/// Closed-form parameter count.
pub fn param_count(kind: ModelKind, cfg: ModelConfig) -> usize {
    let (c, d, k) = (cfg.channels, cfg.hidden, cfg.kernel);
    let path = d * c * k + d + 2 * d + d * d + d;
    let head = N_CLASSES * d + N_CLASSES;
    match kind {
        ModelKind::StreamAad => 4 * path + head,
        ModelKind::Cnn => path + head,
    }
}

pub fn count_macs(kind: ModelKind, cfg: ModelConfig, shape: InputShape) -> Result<u64> {
    Error::check_dim("count_macs", "channels", cfg.channels, shape.channels)?;
    if shape.samples < cfg.kernel {
        return Err(Error::invalid(format!(
            "count_macs: {} samples per window is shorter than the kernel {}",
            shape.samples, cfg.kernel
        )));
    }
    let (c, d, k) = (cfg.channels as u64, cfg.hidden as u64, cfg.kernel as u64);
    let positions = (shape.samples - cfg.kernel + 1) as u64;
    let conv = positions * d * c * k;
    let linear = d * d;
    let head = N_CLASSES as u64 * d;
    let per_window = match kind {
        ModelKind::StreamAad => 4 * (conv + linear) + head,
        ModelKind::Cnn => conv + linear + head,
    };
    Ok(per_window * shape.windows as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{init_cnn_params, init_params, StreamAadParams};

    const PAPER: InputShape = InputShape {
        windows: 9,
        samples: 128,
        channels: 32,
    };

    #[test]
    fn streamaad_reference_counts() {
        let cfg = ModelConfig::default();
        assert_eq!(param_count(ModelKind::StreamAad, cfg), 33_346);
        let p: StreamAadParams<f32> = init_params(0, cfg);
        assert_eq!(count_params(&p), 33_346);
        assert_eq!(
            count_macs(ModelKind::StreamAad, cfg, PAPER).unwrap(),
            31_519_296
        );
        let one = InputShape {
            windows: 1,
            ..PAPER
        };
        assert_eq!(
            count_macs(ModelKind::StreamAad, cfg, one).unwrap(),
            3_502_144
        );
    }

    #[test]
    fn component_counts() {
        let cfg = ModelConfig::default();
        // head alone
        assert_eq!(2 * cfg.hidden + 2, 66);
        assert_eq!(param_count(ModelKind::Cnn, cfg), 8_386);
        assert_eq!(count_params(&init_cnn_params::<f32>(0, cfg)), 8_386);
        // a single gate's convolution over one window
        assert_eq!(122u64 * 32 * 32 * 7, 874_496);
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = ModelConfig::default();
        assert!(count_macs(
            ModelKind::StreamAad,
            cfg,
            InputShape {
                channels: 16,
                ..PAPER
            }
        )
        .is_err());
        assert!(count_macs(
            ModelKind::StreamAad,
            cfg,
            InputShape {
                samples: 6,
                ..PAPER
            }
        )
        .is_err());
    }
}
