use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::TrialMeta;
use crate::error::{Error, Result};
use crate::eval::{accuracy, decide};
use crate::model::{Model, Scratch, WindowSequence, N_CLASSES};
use crate::real::Real;
use crate::tensor::Tensor;

/// Identifies one decision window: its trial and first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowKey {
    pub meta: TrialMeta,
    pub start: usize,
}

/// Per-window class distributions over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowProbs<F> {
    pub keys: Vec<WindowKey>,
    /// `[windows x 2]`
    pub probs: Tensor<F>,
}

impl<F: Real> WindowProbs<F> {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.keys.iter().map(|k| k.meta.label.index()).collect()
    }

    pub fn decisions(&self) -> Vec<u8> {
        self.probs
            .data()
            .chunks_exact(N_CLASSES)
            .map(decide)
            .collect()
    }

    /// Window-level accuracy against the true labels.
    pub fn accuracy(&self) -> Result<f64> {
        accuracy(&self.decisions(), &self.labels())
    }

    /// Accuracy restricted to windows of one subject.
    pub fn subject_accuracy(&self, subject: u32) -> Result<f64> {
        let (d, l): (Vec<u8>, Vec<u8>) = self
            .decisions()
            .into_iter()
            .zip(self.keys.iter())
            .filter(|(_, k)| k.meta.subject == subject)
            .map(|(d, k)| (d, k.meta.label.index()))
            .unzip();
        accuracy(&d, &l)
    }
}

pub fn window_keys<F: Real>(seqs: &[WindowSequence<F>]) -> Vec<WindowKey> {
    seqs.iter()
        .flat_map(|s| {
            (0..s.len()).map(move |t| WindowKey {
                meta: *s.meta(),
                start: s.start_sample() + t * s.stride(),
            })
        })
        .collect()
}

/// Predictions of one model for every window of `seqs`, in order.
pub fn predict_windows<F: Real>(
    model: &Model<F>,
    seqs: &[WindowSequence<F>],
) -> Result<WindowProbs<F>> {
    let mut scratch = Scratch::new();
    let mut data = Vec::new();
    for s in seqs {
        data.extend_from_slice(model.predict(s, &mut scratch)?.data());
    }
    let keys = window_keys(seqs);
    let probs = Tensor::new([keys.len(), N_CLASSES], data)?;
    Ok(WindowProbs { keys, probs })
}

/// Elementwise mean of distributions over the same windows.
pub fn average<F: Real>(parts: &[WindowProbs<F>]) -> Result<WindowProbs<F>> {
    let Some(first) = parts.first() else {
        return Err(Error::invalid("cannot average zero prediction sets"));
    };
    for (i, p) in parts.iter().enumerate().skip(1) {
        if p.keys != first.keys {
            return Err(Error::Consistency(format!(
                "prediction set {i} covers different windows than set 0 ({} vs {})",
                p.len(),
                first.len()
            )));
        }
    }
    let mut sum = Tensor::zeros(first.probs.shape().to_vec());
    for p in parts {
        sum.axpy(F::one(), &p.probs)?;
    }
    sum.scale(F::one() / F::from_usize(parts.len()).unwrap());
    Ok(WindowProbs {
        keys: first.keys.clone(),
        probs: sum,
    })
}

/// Averages the output distributions of several checkpoints of one run.
pub fn ensemble_across_epochs<F: Real>(
    checkpoints: &[&Model<F>],
    seqs: &[WindowSequence<F>],
) -> Result<WindowProbs<F>> {
    if checkpoints.is_empty() {
        return Err(Error::invalid(
            "epoch ensemble needs at least one checkpoint",
        ));
    }
    let parts = checkpoints
        .iter()
        .map(|m| predict_windows(m, seqs))
        .collect::<Result<Vec<_>>>()?;
    average(&parts)
}

/// Averages per-run ensembles; every run must cover the same windows.
pub fn ensemble_across_runs<F: Real>(runs: &[WindowProbs<F>]) -> Result<WindowProbs<F>> {
    average(runs)
}
