use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ProcessedTrial;
use crate::error::{Error, Result};
use crate::model::WindowSequence;
use crate::real::Real;
use crate::tensor::Tensor;

/// Window, stride and segment lengths in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_s: f64,
    pub stride_s: f64,
    pub segment_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_s: 1.0,
            stride_s: 0.5,
            segment_s: 5.0,
        }
    }
}

fn to_samples(what: &str, seconds: f64, fs: u32) -> Result<usize> {
    let n = (seconds * fs as f64).round();
    if n.is_nan() || n < 1.0 || !n.is_finite() {
        return Err(Error::invalid(format!(
            "{what} of {seconds} s is less than one sample at {fs} Hz"
        )));
    }
    Ok(n as usize)
}

impl WindowSpec {
    /// `(window, stride, segment)` in samples.
    pub fn samples(&self, fs: u32) -> Result<(usize, usize, usize)> {
        let w = to_samples("window", self.window_s, fs)?;
        let s = to_samples("stride", self.stride_s, fs)?;
        let g = to_samples("segment", self.segment_s, fs)?;
        if g < w {
            return Err(Error::invalid(format!(
                "segment of {g} samples is shorter than a {w}-sample window"
            )));
        }
        Ok((w, s, g))
    }

    /// Windows per segment.
    pub fn windows_per_segment(&self, fs: u32) -> Result<usize> {
        let (w, s, g) = self.samples(fs)?;
        Ok(window_count(g, w, s))
    }
}

/// Number of complete windows of `len` at `stride` that fit in `m` samples.
pub fn window_count(m: usize, len: usize, stride: usize) -> usize {
    if m < len || len == 0 || stride == 0 {
        0
    } else {
        (m - len) / stride + 1
    }
}

/// Sliding windows over the whole trial, each as a one-window sequence.
/// A trial shorter than one window yields an empty list; callers report it.
pub fn segment_windows<F: Real>(
    trial: &ProcessedTrial<F>,
    spec: &WindowSpec,
) -> Result<Vec<WindowSequence<F>>> {
    let (len, stride, _) = spec.samples(trial.fs)?;
    let c = trial.channels();
    let n = window_count(trial.len(), len, stride);
    let data = trial.samples.data();
    (0..n)
        .map(|i| {
            let start = i * stride;
            let w = Tensor::new([len, c], data[start * c..(start + len) * c].to_vec())?;
            WindowSequence::single(w, trial.meta, start)
        })
        .collect()
}

/// Non-overlapping segments, each cut into a window sequence. The partial
/// tail segment is dropped.
pub fn build_sequences<F: Real>(
    trial: &ProcessedTrial<F>,
    spec: &WindowSpec,
) -> Result<Vec<WindowSequence<F>>> {
    let (len, stride, seg) = spec.samples(trial.fs)?;
    let c = trial.channels();
    let data = trial.samples.data();
    (0..trial.len() / seg)
        .map(|i| {
            let start = i * seg;
            let span = Tensor::new([seg, c], data[start * c..(start + seg) * c].to_vec())?;
            WindowSequence::new(span, len, stride, trial.meta, start)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Direction, Scenario, TrialMeta};

    fn trial(n: usize, c: usize) -> ProcessedTrial<f32> {
        ProcessedTrial {
            samples: Tensor::new([n, c], (0..n * c).map(|v| v as f32).collect()).unwrap(),
            fs: 128,
            meta: TrialMeta {
                subject: 1,
                scenario: Scenario::AudioOnly,
                trial: 3,
                label: Direction::Right,
            },
        }
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::default();
        assert_eq!(segment_windows(&trial(640, 2), &spec).unwrap().len(), 9);
        assert_eq!(segment_windows(&trial(128, 2), &spec).unwrap().len(), 1);
        assert!(segment_windows(&trial(127, 2), &spec).unwrap().is_empty());
        assert_eq!(spec.windows_per_segment(128).unwrap(), 9);
    }

    #[test]
    fn window_contents_and_labels() {
        let t = trial(300, 2);
        let ws = segment_windows(&t, &WindowSpec::default()).unwrap();
        assert_eq!(ws.len(), 3);
        for (i, w) in ws.iter().enumerate() {
            assert_eq!(w.len(), 1);
            assert_eq!(w.label(), 1);
            assert_eq!(w.start_sample(), i * 64);
            assert_eq!(w.span().data()[0], (i * 64 * 2) as f32);
            assert_eq!(w.span().shape(), &[128, 2]);
        }
    }

    #[test]
    fn sequence_counts() {
        let spec = WindowSpec::default();
        assert_eq!(
            build_sequences(&trial(135 * 128, 1), &spec).unwrap().len(),
            27
        );
        let one = build_sequences(&trial(640, 32), &spec).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 9);
        assert_eq!(one[0].window(0).len(), 128);
        assert_eq!(one[0].channels(), 32);
        assert!(build_sequences(&trial(627, 1), &spec).unwrap().is_empty());
    }

    #[test]
    fn sequences_do_not_overlap() {
        let seqs = build_sequences(&trial(128 * 20, 1), &WindowSpec::default()).unwrap();
        for pair in seqs.windows(2) {
            assert_eq!(pair[1].start_sample(), pair[0].start_sample() + 640);
        }
    }

    #[test]
    fn bad_spec() {
        let spec = WindowSpec {
            window_s: 0.001,
            ..WindowSpec::default()
        };
        assert!(spec.samples(128).is_err());
        let spec = WindowSpec {
            segment_s: 0.5,
            ..WindowSpec::default()
        };
        assert!(spec.samples(128).is_err());
    }
}
