use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Pass band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    /// Within-trial preprocessing band.
    pub const BROADBAND: Band = Band {
        lo_hz: 1.0,
        hi_hz: 45.0,
    };
    /// Alpha and beta only, used for cross-trial runs.
    pub const ALPHA_BETA: Band = Band {
        lo_hz: 7.0,
        hi_hz: 30.0,
    };

    pub fn validate(&self, fs: u32) -> Result<()> {
        let nyq = fs as f64 / 2.0;
        if !(self.lo_hz > 0.0 && self.lo_hz < self.hi_hz && self.hi_hz < nyq) {
            return Err(Error::invalid(format!(
                "band ({}, {}) Hz must satisfy 0 < lo < hi < {nyq}",
                self.lo_hz, self.hi_hz
            )));
        }
        Ok(())
    }
}

/// One second-order section, `a0 = 1`. First-order sections use
/// `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state for a constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        [y - self.b[0], self.b[2] - self.a[1] * y]
    }

    /// Complex gain at normalized frequency `w` (radians per sample).
    fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let ni = self.b[1] * s1 + self.b[2] * s2;
        let dr = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let di = self.a[0] * s1 + self.a[1] * s2;
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Butterworth {
    LowPass,
    HighPass,
}

impl Butterworth {
    /// Digital Butterworth design via the bilinear transform with
    /// frequency prewarping.
    pub fn design(self, order: usize, cutoff_hz: f64, fs: f64) -> Result<SosFilter> {
        if order == 0 {
            return Err(Error::invalid("filter order must be at least 1"));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz outside (0, {})",
                fs / 2.0
            )));
        }
        let k = (PI * cutoff_hz / fs).tan();
        let mut sections = Vec::new();
        for i in 0..order / 2 {
            let theta = PI * (2 * i + 1 + order % 2) as f64 / (2 * order) as f64;
            let q = 1.0 / (2.0 * theta.cos());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
            let b = match self {
                Butterworth::LowPass => {
                    let b0 = k * k * norm;
                    [b0, 2.0 * b0, b0]
                }
                Butterworth::HighPass => [norm, -2.0 * norm, norm],
            };
            sections.push(Biquad { b, a });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            let a = [(k - 1.0) * norm, 0.0];
            let b = match self {
                Butterworth::LowPass => [k * norm, k * norm, 0.0],
                Butterworth::HighPass => [norm, -norm, 0.0],
            };
            sections.push(Biquad { b, a });
        }
        Ok(SosFilter { sections })
    }
}

impl SosFilter {
    pub fn then(mut self, other: SosFilter) -> SosFilter {
        self.sections.extend(other.sections);
        self
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / fs;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                (re * re + im * im).sqrt()
            })
            .product()
    }

    /// Runs the cascade over `x` in place. `x0` scales the steady-state
    /// initial conditions; pass `None` to start from rest.
    pub fn filter_in_place(&self, x: &mut [f64], x0: Option<f64>) {
        let mut scale = x0.unwrap_or(0.0);
        for s in &self.sections {
            let zi = s.steady_state();
            let (mut z1, mut z2) = (zi[0] * scale, zi[1] * scale);
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * y + z2;
                z2 = s.b[2] * xin - s.a[1] * y;
                *v = y;
            }
            scale *= s.dc_gain();
        }
    }

    /// Edge padding used by [`SosFilter::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Forward-backward filtering with odd extension at both ends and
    /// steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let first = ext[0];
        self.filter_in_place(&mut ext, Some(first));
        ext.reverse();
        let first = ext[0];
        self.filter_in_place(&mut ext, Some(first));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Butterworth high-pass at `band.lo_hz` cascaded with low-pass at
/// `band.hi_hz`, each of `order`, applied per channel of a
/// `[samples x channels]` signal.
pub fn bandpass<F: Real>(
    x: &Tensor<F>,
    fs: u32,
    band: Band,
    order: usize,
    zero_phase: bool,
) -> Result<Tensor<F>> {
    if x.ndim() != 2 {
        return Err(Error::invalid(
            "bandpass: input must be [samples x channels]",
        ));
    }
    band.validate(fs)?;
    let fsf = fs as f64;
    let sos = Butterworth::HighPass
        .design(order, band.lo_hz, fsf)?
        .then(Butterworth::LowPass.design(order, band.hi_hz, fsf)?);
    let (n, ch) = (x.shape()[0], x.shape()[1]);
    let mut out = vec![F::zero(); n * ch];
    let mut col = vec![0.0f64; n];
    for c in 0..ch {
        for (t, v) in col.iter_mut().enumerate() {
            *v = x.data()[t * ch + c].as_f64();
        }
        let y = if zero_phase {
            sos.filtfilt(&col)
        } else {
            let mut y = col.clone();
            sos.filter_in_place(&mut y, None);
            y
        };
        for (t, v) in y.iter().enumerate() {
            out[t * ch + c] = F::from_f64_lossy(*v);
        }
    }
    Tensor::new([n, ch], out)
}
