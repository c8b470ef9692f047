//! Adam training over window sequences, checkpoint retention and the
//! epoch and run ensembles.

mod adam;
mod ensemble;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use ensemble::{
    average, ensemble_across_epochs, ensemble_across_runs, predict_windows, window_keys, WindowKey,
    WindowProbs,
};

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::decide;
use crate::model::{Model, ModelConfig, ModelKind, ParamSet, Scratch, WindowSequence};
use crate::real::{Precision, Real};
use crate::rng::{derive, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Snapshots kept from the end of training.
    pub checkpoint_last_k: usize,
    pub model: ModelKind,
    pub model_config: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 150,
            seed: 0,
            precision: Precision::F32,
            checkpoint_last_k: 10,
            model: ModelKind::StreamAad,
            model_config: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_last_k == 0 {
            return Err(Error::invalid(format!(
                "batch size ({}), epochs ({}) and checkpoint count ({}) must be positive",
                self.batch_size, self.epochs, self.checkpoint_last_k
            )));
        }
        self.model_config.validate()
    }
}

/// Metrics of one epoch. Train metrics are accumulated during the epoch's
/// updates; validation metrics use the end-of-epoch parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub epoch: usize,
    pub model: Model<F>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: Model<F>,
    /// The last `checkpoint_last_k` epochs, oldest first.
    pub checkpoints: Vec<Checkpoint<F>>,
    pub history: Vec<EpochRecord>,
}

impl<F: Real> TrainOutcome<F> {
    pub fn checkpoint_models(&self) -> Vec<&Model<F>> {
        self.checkpoints.iter().map(|c| &c.model).collect()
    }
}

/// Visit order of the training sequences in `epoch` (1-based).
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(derive(
        derive(seed, stream::SHUFFLE),
        epoch as u64,
    )));
    idx
}

/// Mean sequence loss and window-level accuracy.
pub fn evaluate<F: Real>(model: &Model<F>, seqs: &[WindowSequence<F>]) -> Result<(f64, f64)> {
    let mut scratch = Scratch::new();
    let (mut loss, mut correct, mut windows) = (0.0, 0usize, 0usize);
    for s in seqs {
        loss += model.loss(s, &mut scratch)?.as_f64();
        let probs = model.predict(s, &mut scratch)?;
        correct += count_correct(probs.data(), s.label());
        windows += s.len();
    }
    if seqs.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Ok((loss / seqs.len() as f64, correct as f64 / windows as f64))
}

fn count_correct<F: Real>(probs: &[F], label: u8) -> usize {
    probs.chunks_exact(2).filter(|p| decide(p) == label).count()
}

/// Trains a fresh model. The run is a pure function of the data and `cfg`:
/// initialization and the per-epoch shuffles derive from `cfg.seed`.
/// `observer` sees each epoch's record as soon as it is complete.
pub fn train<F: Real>(
    train: &[WindowSequence<F>],
    val: &[WindowSequence<F>],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training partition is empty"));
    }
    if cfg.precision != F::PRECISION {
        return Err(Error::Consistency(format!(
            "config asks for {} but the run uses {}",
            cfg.precision.name(),
            F::PRECISION.name()
        )));
    }
    let channels = cfg.model_config.channels;
    if let Some(s) = train.iter().chain(val).find(|s| s.channels() != channels) {
        Error::check_dim("train", "channels", channels, s.channels())?;
    }

    let mut model = Model::<F>::init(cfg.model, cfg.model_config, derive(cfg.seed, stream::INIT));
    let mut grads = model.zeros_like();
    let mut adam = AdamState::new(&model);
    let hp = AdamHyper::with_lr(cfg.learning_rate);
    let mut scratch = Scratch::new();
    let mut kept: VecDeque<Checkpoint<F>> = VecDeque::with_capacity(cfg.checkpoint_last_k);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train.len());
        let (mut loss_sum, mut correct, mut windows) = (0.0f64, 0usize, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.zero_all();
            for &i in batch {
                let s = &train[i];
                let (loss, probs) = model.loss_and_grad(s, &mut grads, &mut scratch)?;
                let loss = loss.as_f64();
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {loss} at epoch {epoch}, batch {b}, trial {:?} sample {}",
                        s.meta(),
                        s.start_sample()
                    )));
                }
                loss_sum += loss;
                correct += count_correct(probs.data(), s.label());
                windows += s.len();
            }
            let inv = F::one() / F::from_usize(batch.len()).unwrap();
            for g in grads.tensors_mut() {
                g.scale(inv);
            }
            adam_step(&mut model, &grads, &mut adam, &hp)?;
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, val)?;
            (Some(l), Some(a))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / windows as f64,
            val_loss,
            val_accuracy,
        };
        observer(&record);
        history.push(record);
        if epoch + cfg.checkpoint_last_k > cfg.epochs {
            if kept.len() == cfg.checkpoint_last_k {
                kept.pop_front();
            }
            kept.push_back(Checkpoint {
                epoch,
                model: model.clone(),
            });
        }
    }
    Ok(TrainOutcome {
        model,
        checkpoints: kept.into(),
        history,
    })
}
