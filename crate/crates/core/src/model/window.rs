use alloc::format;

use crate::data::TrialMeta;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// One decision window: `len x channels` samples, time-major.
#[derive(Debug, Clone, Copy)]
pub struct DecisionWindow<'a, F> {
    samples: &'a [F],
    len: usize,
    channels: usize,
}

impl<'a, F: Real> DecisionWindow<'a, F> {
    pub fn new(samples: &'a [F], len: usize, channels: usize) -> Result<Self> {
        if len == 0 || channels == 0 || samples.len() != len * channels {
            return Err(Error::invalid(format!(
                "decision window of {len}x{channels} cannot hold {} samples",
                samples.len()
            )));
        }
        Ok(DecisionWindow {
            samples,
            len,
            channels,
        })
    }

    pub fn from_tensor(t: &'a Tensor<F>) -> Result<Self> {
        if t.ndim() != 2 {
            return Err(Error::invalid(
                "decision window must be a [len x channels] tensor",
            ));
        }
        Self::new(t.data(), t.shape()[0], t.shape()[1])
    }

    pub fn samples(&self) -> &'a [F] {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn to_tensor(&self) -> Tensor<F> {
        Tensor::new([self.len, self.channels], self.samples.to_vec())
            .expect("checked at construction")
    }

    /// Channels-first copy `[channels x len]`.
    pub fn transposed(&self) -> Tensor<F> {
        self.to_tensor().transpose().expect("2-D")
    }
}

/// Ordered decision windows cut from one trial with a fixed stride.
///
/// The samples covering all windows are stored once, so window `t` is the
/// contiguous row range `[t * stride, t * stride + window_len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSequence<F> {
    span: Tensor<F>,
    window_len: usize,
    stride: usize,
    n_windows: usize,
    meta: TrialMeta,
    start_sample: usize,
}

impl<F: Real> WindowSequence<F> {
    /// `span` is `[n x channels]`; it must contain at least one window.
    /// Trailing rows that do not complete a window are dropped.
    pub fn new(
        span: Tensor<F>,
        window_len: usize,
        stride: usize,
        meta: TrialMeta,
        start_sample: usize,
    ) -> Result<Self> {
        if span.ndim() != 2 {
            return Err(Error::invalid("sequence span must be [samples x channels]"));
        }
        if window_len == 0 || stride == 0 {
            return Err(Error::invalid("window length and stride must be positive"));
        }
        let (rows, channels) = (span.shape()[0], span.shape()[1]);
        if rows < window_len {
            return Err(Error::invalid(format!(
                "sequence span of {rows} samples is shorter than one {window_len}-sample window"
            )));
        }
        let n_windows = (rows - window_len) / stride + 1;
        let used = (n_windows - 1) * stride + window_len;
        let span = if used == rows {
            span
        } else {
            let mut data = span.into_data();
            data.truncate(used * channels);
            Tensor::new([used, channels], data)?
        };
        Ok(WindowSequence {
            span,
            window_len,
            stride,
            n_windows,
            meta,
            start_sample,
        })
    }

    /// A one-window sequence, as used for isolated-window decoding.
    pub fn single(window: Tensor<F>, meta: TrialMeta, start_sample: usize) -> Result<Self> {
        let len = window.shape().first().copied().unwrap_or(0);
        Self::new(window, len, len.max(1), meta, start_sample)
    }

    pub fn len(&self) -> usize {
        self.n_windows
    }

    pub fn is_empty(&self) -> bool {
        self.n_windows == 0
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn channels(&self) -> usize {
        self.span.shape()[1]
    }

    pub fn span(&self) -> &Tensor<F> {
        &self.span
    }

    pub fn span_len(&self) -> usize {
        self.span.shape()[0]
    }

    pub fn meta(&self) -> &TrialMeta {
        &self.meta
    }

    pub fn label(&self) -> u8 {
        self.meta.label.index()
    }

    /// Offset of the first sample within the source trial.
    pub fn start_sample(&self) -> usize {
        self.start_sample
    }

    pub fn window(&self, t: usize) -> DecisionWindow<'_, F> {
        assert!(t < self.n_windows, "window {t} of {}", self.n_windows);
        let c = self.channels();
        let start = t * self.stride * c;
        DecisionWindow {
            samples: &self.span.data()[start..start + self.window_len * c],
            len: self.window_len,
            channels: c,
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = DecisionWindow<'_, F>> + '_ {
        (0..self.n_windows).map(move |t| self.window(t))
    }
}
