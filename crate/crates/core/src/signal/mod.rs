//! Preprocessing and dataset shaping: resampling, Butterworth filtering,
//! volt-to-microvolt scaling, windowing, sequence building and the two data
//! partitioning strategies.
//!
//! Filtering and resampling run in `f64` internally whatever the storage
//! precision of the trial.

mod filter;
mod partition;
mod resample;
mod window;

pub use filter::{bandpass, Band, Biquad, Butterworth, SosFilter};
pub use partition::{partition_cross_trial, partition_within_trial, CrossTrialSplit};
pub use resample::{resample, Resampler};
pub use window::{build_sequences, segment_windows, window_count, WindowSpec};

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::data::TrialMeta;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Recording rate of raw trials.
pub const RAW_FS: u32 = 1000;
/// Rate after downsampling.
pub const TARGET_FS: u32 = 128;
/// Volts to microvolts.
pub const MICROVOLTS_PER_VOLT: f64 = 1e6;

/// One trial as recorded: `[samples x channels]` in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial<F> {
    pub samples: Tensor<F>,
    pub fs: u32,
    pub meta: TrialMeta,
}

/// One trial after preprocessing: `[samples x channels]` in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrial<F> {
    pub samples: Tensor<F>,
    pub fs: u32,
    pub meta: TrialMeta,
}

impl<F: Real> ProcessedTrial<F> {
    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    /// Rows `[start, end)` as a new trial with the same metadata.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.channels();
        let data = self.samples.data()[start * c..end * c].to_vec();
        ProcessedTrial {
            samples: Tensor::new([end - start, c], data).expect("row slice"),
            fs: self.fs,
            meta: self.meta,
        }
    }
}

/// Settings of the preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_fs: u32,
    pub band: Band,
    pub filter_order: usize,
    pub zero_phase: bool,
    pub scale_to_microvolts: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_fs: TARGET_FS,
            band: Band::BROADBAND,
            filter_order: 4,
            zero_phase: true,
            scale_to_microvolts: true,
        }
    }
}

pub fn scale_to_microvolts<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let k = F::from_f64_lossy(MICROVOLTS_PER_VOLT);
    x.map(|v| v * k)
}

/// Downsample, band-pass, then scale to microvolts. No artifact removal.
pub fn preprocess<F: Real>(raw: &RawTrial<F>, cfg: &PreprocessConfig) -> Result<ProcessedTrial<F>> {
    if raw.samples.ndim() != 2 {
        return Err(Error::invalid(format!(
            "trial {:?}: samples must be [time x channels]",
            raw.meta
        )));
    }
    let resampled = resample(&raw.samples, raw.fs, cfg.target_fs)?;
    let filtered = bandpass(
        &resampled,
        cfg.target_fs,
        cfg.band,
        cfg.filter_order,
        cfg.zero_phase,
    )?;
    let samples = if cfg.scale_to_microvolts {
        scale_to_microvolts(&filtered)
    } else {
        filtered
    };
    Ok(ProcessedTrial {
        samples,
        fs: cfg.target_fs,
        meta: raw.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn microvolt_scaling() {
        let x = Tensor::<f64>::from_f64([3], &[1e-6, 0.0, -2e-6]).unwrap();
        let y = scale_to_microvolts(&x);
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(y.data()[1], 0.0);
        assert!((y.data()[2] + 2.0).abs() < 1e-12);
    }
}
