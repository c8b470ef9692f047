//! Synthetic EEG with a controllable attention signature.
//!
//! Each channel carries spatially white pink background noise plus an alpha
//! oscillation. The left and right channel groups each share one narrowband
//! alpha source; the group on the attended side gets `contrast` times the
//! amplitude of the other. Channels outside both groups see the mean of the
//! two sources at base amplitude. On top of that, every trial has its own
//! fixed spatial mixing `I + phi * Q` and every channel a slowly drifting
//! gain.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Direction, Scenario, TrialMeta};
use crate::error::{Error, Result};
use crate::numerics::gemm;
use crate::real::Real;
use crate::rng::{derive, rng_from};
use crate::signal::{Butterworth, RawTrial, RAW_FS};
use crate::tensor::Tensor;

/// Peak-to-edge half width of the alpha band in Hz.
pub const ALPHA_HALF_WIDTH_HZ: f64 = 2.0;
/// Unit-RMS sources are multiplied by this to land in the volt range.
pub const VOLT_SCALE: f64 = 1e-5;
pub const GAIN_MIN: f64 = 0.5;
pub const GAIN_MAX: f64 = 2.0;

mod tag {
    pub const LABELS: u64 = 0x4C;
    pub const BACKGROUND: u64 = 0x10;
    pub const ALPHA: u64 = 0x11;
    pub const DRIFT: u64 = 0x12;
    pub const FINGERPRINT: u64 = 0x13;
    pub const TRIAL_BASE: u64 = 0x1000;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_subjects: u32,
    /// Trials per subject and scenario.
    pub n_trials: u32,
    pub duration_s: f64,
    pub fs: u32,
    pub n_channels: usize,
    pub left_group: Vec<usize>,
    pub right_group: Vec<usize>,
    pub alpha_hz: f64,
    /// Alpha amplitude ratio between the attended-side and the other group.
    pub attention_contrast: f64,
    /// Standard deviation per second of the channel gain random walk.
    pub drift_strength: f64,
    /// Magnitude of the per-trial spatial mixing perturbation.
    pub fingerprint_strength: f64,
    /// Base alpha amplitude relative to the unit-RMS background.
    pub noise_snr: f64,
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 8,
            n_trials: 16,
            duration_s: 150.0,
            fs: RAW_FS,
            n_channels: 32,
            left_group: (0..12).collect(),
            right_group: (20..32).collect(),
            alpha_hz: 10.0,
            attention_contrast: 1.5,
            drift_strength: 0.0,
            fingerprint_strength: 0.0,
            noise_snr: 0.15,
            scenarios: vec![Scenario::AudioOnly],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if self.n_subjects == 0 || self.n_trials == 0 {
            return bad(format!(
                "need at least one subject and one trial, got {} and {}",
                self.n_subjects, self.n_trials
            ));
        }
        if self.n_channels == 0 || self.fs == 0 {
            return bad(format!(
                "channels ({}) and fs ({}) must be positive",
                self.n_channels, self.fs
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s must be positive", self.duration_s));
        }
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        let mut scen = self.scenarios.clone();
        scen.sort();
        scen.dedup();
        if scen.len() != self.scenarios.len() {
            return bad("scenarios must not repeat".into());
        }
        for (name, group) in [("left", &self.left_group), ("right", &self.right_group)] {
            if group.is_empty() {
                return bad(format!("{name} channel group is empty"));
            }
            if let Some(&c) = group.iter().find(|&&c| c >= self.n_channels) {
                return bad(format!(
                    "{name} group channel {c} outside 0..{}",
                    self.n_channels
                ));
            }
            let mut g = group.clone();
            g.sort_unstable();
            g.dedup();
            if g.len() != group.len() {
                return bad(format!("{name} channel group has duplicates"));
            }
        }
        if let Some(c) = self
            .left_group
            .iter()
            .find(|c| self.right_group.contains(c))
        {
            return bad(format!("channel {c} is in both groups"));
        }
        let hi = self.alpha_hz + ALPHA_HALF_WIDTH_HZ;
        if !(self.alpha_hz - ALPHA_HALF_WIDTH_HZ > 0.0 && hi < self.fs as f64 / 2.0) {
            return bad(format!(
                "alpha frequency {} Hz not representable at {} Hz",
                self.alpha_hz, self.fs
            ));
        }
        for (name, v) in [
            ("attention_contrast", self.attention_contrast),
            ("drift_strength", self.drift_strength),
            ("fingerprint_strength", self.fingerprint_strength),
            ("noise_snr", self.noise_snr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn samples_per_trial(&self) -> usize {
        (self.duration_s * self.fs as f64).round() as usize
    }

    fn group_seed(&self, subject: u32, scenario: Scenario) -> u64 {
        derive(derive(self.seed, subject as u64), scenario as u64)
    }

    fn trial_seed(&self, meta: &TrialMeta) -> u64 {
        derive(
            self.group_seed(meta.subject, meta.scenario),
            tag::TRIAL_BASE + meta.trial as u64,
        )
    }

    /// Labels for one (subject, scenario) group in trial order. Each
    /// consecutive pair of trials holds one left and one right trial in random
    /// order, so every even-aligned block of trials is balanced.
    pub fn labels(&self, subject: u32, scenario: Scenario) -> Vec<Direction> {
        let n = self.n_trials as usize;
        let mut rng = rng_from(derive(self.group_seed(subject, scenario), tag::LABELS));
        let mut labels = Vec::with_capacity(n);
        while labels.len() < n {
            let pair = if rng.random::<bool>() {
                [Direction::Left, Direction::Right]
            } else {
                [Direction::Right, Direction::Left]
            };
            labels.extend(pair.into_iter().take(n - labels.len()));
        }
        labels
    }

    /// All trials of the dataset, subject-major, then scenario, then trial.
    pub fn plan(&self) -> Result<Vec<TrialMeta>> {
        self.validate()?;
        let mut out = Vec::new();
        for subject in 1..=self.n_subjects {
            for &scenario in &self.scenarios {
                for (i, label) in self.labels(subject, scenario).into_iter().enumerate() {
                    out.push(TrialMeta {
                        subject,
                        scenario,
                        trial: i as u32 + 1,
                        label,
                    });
                }
            }
        }
        Ok(out)
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

/// Pink noise by Kellet's economy filter bank, unit RMS.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize, warmup: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + warmup {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let p = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115926;
        if i >= warmup {
            out.push(p);
        }
    }
    normalize_rms(&mut out);
    out
}

/// Band-limited Gaussian noise around `center`, unit RMS.
fn narrowband(
    rng: &mut ChaCha8Rng,
    n: usize,
    warmup: usize,
    center: f64,
    fs: f64,
) -> Result<Vec<f64>> {
    let sos = Butterworth::HighPass
        .design(4, center - ALPHA_HALF_WIDTH_HZ, fs)?
        .then(Butterworth::LowPass.design(4, center + ALPHA_HALF_WIDTH_HZ, fs)?);
    let mut x = normals(rng, n + warmup);
    sos.filter_in_place(&mut x, None);
    let mut out = x.split_off(warmup);
    normalize_rms(&mut out);
    Ok(out)
}

/// Generates one raw trial in volts, a pure function of the config and
/// `meta`.
pub fn generate_trial<F: Real>(cfg: &SynthConfig, meta: TrialMeta) -> Result<RawTrial<F>> {
    cfg.validate()?;
    let n = cfg.samples_per_trial();
    let c = cfg.n_channels;
    let fs = cfg.fs as f64;
    let warmup = 2 * cfg.fs as usize;
    let seed = cfg.trial_seed(&meta);

    let mut rng = rng_from(derive(seed, tag::BACKGROUND));
    let mut src = vec![0.0f64; n * c];
    for ch in 0..c {
        for (t, v) in pink_noise(&mut rng, n, warmup).into_iter().enumerate() {
            src[t * c + ch] = v;
        }
    }

    let mut rng = rng_from(derive(seed, tag::ALPHA));
    let left = narrowband(&mut rng, n, warmup, cfg.alpha_hz, fs)?;
    let right = narrowband(&mut rng, n, warmup, cfg.alpha_hz, fs)?;
    let base = cfg.noise_snr;
    let strong = base * cfg.attention_contrast;
    let (amp_left, amp_right) = match meta.label {
        Direction::Left => (strong, base),
        Direction::Right => (base, strong),
    };
    let mid = base * core::f64::consts::FRAC_1_SQRT_2;
    for ch in 0..c {
        let (wl, wr) = if cfg.left_group.contains(&ch) {
            (amp_left, 0.0)
        } else if cfg.right_group.contains(&ch) {
            (0.0, amp_right)
        } else {
            (mid, mid)
        };
        for t in 0..n {
            src[t * c + ch] += wl * left[t] + wr * right[t];
        }
    }

    let phi = cfg.fingerprint_strength;
    let mut x = if phi > 0.0 {
        let mut rng = rng_from(derive(seed, tag::FINGERPRINT));
        let sd = 1.0 / (c as f64).sqrt();
        let mut mix: Vec<f64> = normals(&mut rng, c * c)
            .into_iter()
            .map(|q| phi * sd * q)
            .collect();
        for i in 0..c {
            mix[i * c + i] += 1.0;
        }
        // x[t, i] = sum_j mix[i, j] * src[t, j]
        let mut out = vec![0.0f64; n * c];
        gemm(n, c, c, 1.0, &src, c, 1, &mix, 1, c, 0.0, &mut out, c, 1);
        out
    } else {
        src
    };

    if cfg.drift_strength > 0.0 {
        let mut rng = rng_from(derive(seed, tag::DRIFT));
        let step = cfg.drift_strength / fs.sqrt();
        let mut gain = vec![1.0f64; c];
        for t in 0..n {
            for (ch, g) in gain.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *g = (*g + step * z).clamp(GAIN_MIN, GAIN_MAX);
                x[t * c + ch] *= *g;
            }
        }
    }

    let samples = x
        .into_iter()
        .map(|v| F::from_f64_lossy(v * VOLT_SCALE))
        .collect();
    Ok(RawTrial {
        samples: Tensor::new([n, c], samples)?,
        fs: cfg.fs,
        meta,
    })
}
