use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Anti-alias cutoff as a fraction of the target Nyquist frequency.
pub const CUTOFF_FRACTION: f64 = 0.9;
pub const KAISER_BETA: f64 = 8.6;
/// Filter half-length counted in input samples.
pub const HALF_LENGTH: usize = 64;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Rational polyphase resampler with a Kaiser-windowed sinc low-pass.
///
/// Output sample `m` is `sum_j x[j] * h(m * down - j * up)` where `h` is the
/// prototype filter at the upsampled rate. Each of the `up` polyphase
/// branches is normalized to unit DC gain. Samples beyond the input are
/// treated as zero, so the first and last `HALF_LENGTH` input samples' worth
/// of output carry edge effects.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half: usize,
    /// `phases[phi][i]` multiplies `x[j0 + half - i]`, `i in 0..=2*half`.
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(from_fs: u32, to_fs: u32) -> Result<Self> {
        if from_fs == 0 || to_fs == 0 {
            return Err(Error::invalid(format!(
                "resample: rates must be positive, got {from_fs} -> {to_fs}"
            )));
        }
        let g = gcd(from_fs, to_fs);
        let up = (to_fs / g) as usize;
        let down = (from_fs / g) as usize;
        let half = HALF_LENGTH;
        let taps_half = half * up;
        let up_rate = from_fs as f64 * up as f64;
        let cutoff = CUTOFF_FRACTION * 0.5 * from_fs.min(to_fs) as f64;
        let wc = cutoff / up_rate;
        let denom = bessel_i0(KAISER_BETA);
        let proto = |n: i64| -> f64 {
            let a = n.unsigned_abs() as f64;
            if a > taps_half as f64 {
                return 0.0;
            }
            let x = 2.0 * wc * n as f64;
            let sinc = if n == 0 {
                1.0
            } else {
                (core::f64::consts::PI * x).sin() / (core::f64::consts::PI * x)
            };
            let r = n as f64 / taps_half as f64;
            let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            2.0 * wc * sinc * win
        };
        let mut phases = Vec::with_capacity(up);
        for phi in 0..up {
            let mut taps: Vec<f64> = (0..=2 * half)
                .map(|idx| {
                    let i = idx as i64 - half as i64;
                    proto(phi as i64 + i * up as i64)
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            phases.push(taps);
        }
        Ok(Resampler {
            up,
            down,
            half,
            phases,
        })
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, n: usize) -> usize {
        (n * self.up).div_ceil(self.down)
    }

    /// Resamples every channel of a `[samples x channels]` signal.
    pub fn apply<F: Real>(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.ndim() != 2 {
            return Err(Error::invalid(
                "resample: input must be [samples x channels]",
            ));
        }
        let (n, ch) = (x.shape()[0], x.shape()[1]);
        let m_len = self.output_len(n);
        let src = x.data();
        let mut out = vec![F::zero(); m_len * ch];
        let mut acc = vec![0.0f64; ch];
        for m in 0..m_len {
            let pos = m * self.down;
            let phi = pos % self.up;
            let j0 = (pos / self.up) as i64;
            let taps = &self.phases[phi];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (idx, &h) in taps.iter().enumerate() {
                let j = j0 + self.half as i64 - idx as i64;
                if j < 0 || j >= n as i64 || h == 0.0 {
                    continue;
                }
                let row = &src[j as usize * ch..(j as usize + 1) * ch];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += h * v.as_f64();
                }
            }
            for (o, &a) in out[m * ch..(m + 1) * ch].iter_mut().zip(&acc) {
                *o = F::from_f64_lossy(a);
            }
        }
        Tensor::new([m_len, ch], out)
    }
}

pub fn resample<F: Real>(x: &Tensor<F>, from_fs: u32, to_fs: u32) -> Result<Tensor<F>> {
    Resampler::new(from_fs, to_fs)?.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, n: usize) -> Tensor<f64> {
        Tensor::new(
            [n, 1],
            (0..n)
                .map(|i| (2.0 * core::f64::consts::PI * freq * i as f64 / fs).sin())
                .collect(),
        )
        .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn ratio_and_length() {
        let r = Resampler::new(1000, 128).unwrap();
        assert_eq!(r.ratio(), (16, 125));
        assert_eq!(r.output_len(136_000), 17_408);
        assert_eq!(r.output_len(1000), 128);
        // within one sample of round(N * 128 / 1000)
        for n in [999usize, 1001, 12_345, 150_000] {
            let m = r.output_len(n) as f64;
            assert!((m - (n as f64 * 0.128).round()).abs() <= 1.0);
        }
        assert!(Resampler::new(0, 128).is_err());
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-14);
        assert!((bessel_i0(8.6) - 750.4611595631659).abs() < 1e-9);
    }

    #[test]
    fn dc_is_preserved() {
        let x = Tensor::<f64>::full([5000, 2], 1.0);
        let y = resample(&x, 1000, 128).unwrap();
        let edge = 16; // output samples covering HALF_LENGTH input samples
        for v in &y.data()[edge * 2..y.len() - edge * 2] {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn passband_tone_keeps_amplitude() {
        let y = resample(&tone(10.0, 1000.0, 10_000), 1000, 128).unwrap();
        let mid = &y.data()[200..y.len() - 200];
        let amp = rms(mid) * 2f64.sqrt();
        assert!((amp - 1.0).abs() < 0.01, "{amp}");
        // phase: output sample m is at time m / 128
        for m in [300usize, 555, 900] {
            let expect = (2.0 * core::f64::consts::PI * 10.0 * m as f64 / 128.0).sin();
            assert!((y.data()[m] - expect).abs() < 0.01);
        }
    }

    #[test]
    fn stopband_tone_is_removed() {
        let x = tone(480.0, 1000.0, 10_000);
        let y = resample(&x, 1000, 128).unwrap();
        let ratio = rms(&y.data()[200..y.len() - 200]) / rms(x.data());
        assert!(ratio < 0.01, "{ratio}");
    }
}
