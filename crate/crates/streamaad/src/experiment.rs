//! End-to-end experiments: load or synthesize trials, preprocess, partition,
//! train every (model, subject, run) and evaluate single runs and both
//! ensembles.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use streamaad_core::data::{Partition, TrialMeta};
use streamaad_core::eval::{mean, RunReport};
use streamaad_core::model::{Model, ModelKind, WindowSequence};
use streamaad_core::rng::derive;
use streamaad_core::signal::{
    build_sequences, partition_cross_trial, partition_within_trial, preprocess, segment_windows,
    Band, PreprocessConfig, ProcessedTrial, WindowSpec, TARGET_FS,
};
use streamaad_core::synth::generate_trial;
use streamaad_core::training::{
    ensemble_across_epochs, ensemble_across_runs, predict_windows, train, EpochRecord, TrainConfig,
    TrainOutcome, WindowProbs,
};
use streamaad_core::Real;

use crate::checkpoint::{checkpoint_name, load_checkpoint, save_checkpoint};
use crate::config::{DataSource, ExperimentConfig};
use crate::container::{Dataset, Stage};
use crate::error::{Error, Result};
use crate::metrics::RunId;

/// Processed trials plus the band they were filtered with.
pub struct LoadedTrials {
    pub trials: Vec<ProcessedTrial<f32>>,
    pub band: Band,
    /// Trials too short to yield a single window or sequence.
    pub warnings: Vec<String>,
}

fn preprocess_config(cfg: &ExperimentConfig, band: Band) -> PreprocessConfig {
    PreprocessConfig {
        target_fs: TARGET_FS,
        band,
        filter_order: cfg.filter_order,
        ..PreprocessConfig::default()
    }
}

fn wanted(cfg: &ExperimentConfig, meta: &TrialMeta) -> bool {
    cfg.subjects
        .as_ref()
        .is_none_or(|s| s.contains(&meta.subject))
}

/// Loads, synthesizes or preprocesses the trials an experiment uses.
/// Raw trials are stored as `f32`, matching the on-disk container.
pub fn load_trials(cfg: &ExperimentConfig) -> Result<LoadedTrials> {
    let mut trials = Vec::new();
    let band;
    match &cfg.data {
        DataSource::Synth(s) => {
            band = cfg.band();
            let pp = preprocess_config(cfg, band);
            for meta in s.plan()?.into_iter().filter(|m| wanted(cfg, m)) {
                let raw = generate_trial::<f32>(s, meta)?;
                trials.push(preprocess(&raw, &pp)?);
            }
        }
        DataSource::Path(dir) => {
            let ds = Dataset::open(dir)?;
            let indices: Vec<usize> = (0..ds.len())
                .filter(|&i| wanted(cfg, &ds.manifest.trials[i].meta))
                .collect();
            match ds.manifest.stage {
                Stage::Raw => {
                    band = cfg.band();
                    let pp = preprocess_config(cfg, band);
                    for i in indices {
                        trials.push(preprocess(&ds.load_raw(i)?, &pp)?);
                    }
                }
                Stage::Processed => {
                    let stored = ds.manifest.provenance.as_ref().map(|p| p.band);
                    band = match (cfg.band, stored) {
                        (Some(want), Some(have)) if want != have => {
                            return Err(Error::consistency(
                                dir,
                                format!("dataset was filtered to {have:?} but the config asks for {want:?}"),
                            ))
                        }
                        (_, Some(have)) => have,
                        (want, None) => want.unwrap_or_else(|| cfg.band()),
                    };
                    for i in indices {
                        trials.push(ds.load_processed(i)?);
                    }
                }
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::Config("no trials selected".into()));
    }
    let (win, _, seg) = cfg.windows.samples(TARGET_FS)?;
    let warnings = trials
        .iter()
        .filter(|t| t.len() < seg)
        .map(|t| {
            format!(
                "subject {} {} trial {}: {} samples is shorter than one {}-sample {}",
                t.meta.subject,
                t.meta.scenario,
                t.meta.trial,
                t.len(),
                if t.len() < win { win } else { seg },
                if t.len() < win { "window" } else { "sequence" }
            )
        })
        .collect();
    Ok(LoadedTrials {
        trials,
        band,
        warnings,
    })
}

/// Training and evaluation material for one subject.
#[derive(Debug, Clone)]
pub struct SubjectData<F> {
    pub subject: u32,
    /// Window sequences for the streaming decoder.
    pub train_sequences: Vec<WindowSequence<F>>,
    /// Sliding single windows for the isolated-window baseline.
    pub train_windows: Vec<WindowSequence<F>>,
    /// Logged each epoch.
    pub val: Vec<WindowSequence<F>>,
    /// Reported accuracy is measured here.
    pub eval: Vec<WindowSequence<F>>,
}

impl<F: Real> SubjectData<F> {
    pub fn train_set(&self, kind: ModelKind) -> &[WindowSequence<F>] {
        match kind {
            ModelKind::StreamAad => &self.train_sequences,
            ModelKind::Cnn => &self.train_windows,
        }
    }
}

fn cast_trial<F: Real>(t: &ProcessedTrial<f32>) -> ProcessedTrial<F> {
    ProcessedTrial {
        samples: t.samples.cast(),
        fs: t.fs,
        meta: t.meta,
    }
}

fn add_train<F: Real>(
    d: &mut SubjectData<F>,
    t: &ProcessedTrial<F>,
    spec: &WindowSpec,
) -> Result<()> {
    d.train_sequences.extend(build_sequences(t, spec)?);
    d.train_windows.extend(segment_windows(t, spec)?);
    Ok(())
}

/// Splits every subject's trials. Within trials, the final ninth of each
/// trial is both the logged validation set and the evaluation set. Across
/// trials, the middle trials validate and the last four evaluate.
pub fn subject_data<F: Real>(
    trials: &[ProcessedTrial<f32>],
    partition: Partition,
    spec: &WindowSpec,
) -> Result<Vec<SubjectData<F>>> {
    let mut by_subject: BTreeMap<u32, Vec<ProcessedTrial<F>>> = BTreeMap::new();
    for t in trials {
        by_subject
            .entry(t.meta.subject)
            .or_default()
            .push(cast_trial(t));
    }
    let mut out = Vec::new();
    for (subject, ts) in by_subject {
        let mut d = SubjectData {
            subject,
            train_sequences: Vec::new(),
            train_windows: Vec::new(),
            val: Vec::new(),
            eval: Vec::new(),
        };
        match partition {
            Partition::WithinTrial => {
                for t in &ts {
                    let (tr, va) = partition_within_trial(t);
                    add_train(&mut d, &tr, spec)?;
                    d.eval.extend(build_sequences(&va, spec)?);
                }
                d.val = d.eval.clone();
            }
            Partition::CrossTrial => {
                let mut by_scenario: BTreeMap<_, Vec<ProcessedTrial<F>>> = BTreeMap::new();
                for t in ts {
                    by_scenario.entry(t.meta.scenario).or_default().push(t);
                }
                for group in by_scenario.values() {
                    let split = partition_cross_trial(group)?;
                    for t in split.train {
                        add_train(&mut d, t, spec)?;
                    }
                    for t in split.val {
                        d.val.extend(build_sequences(t, spec)?);
                    }
                    for t in split.test {
                        d.eval.extend(build_sequences(t, spec)?);
                    }
                }
            }
        }
        if d.train_sequences.is_empty() || d.eval.is_empty() {
            return Err(Error::Config(format!(
                "subject {subject}: trials too short for training or evaluation sequences"
            )));
        }
        out.push(d);
    }
    Ok(out)
}

/// Seed of run `run` for `subject`; every run descends from the master
/// seed in the training config.
pub fn run_seed(master: u64, run: usize, subject: u32) -> u64 {
    derive(derive(master, run as u64), subject as u64)
}

/// Predictions of one trained run on its subject's evaluation set.
#[derive(Debug, Clone)]
pub struct RunPredictions<F> {
    pub id: RunId,
    /// Final-epoch model.
    pub single: WindowProbs<F>,
    /// Mean over the retained checkpoints.
    pub epochs: WindowProbs<F>,
}

impl<F: Real> RunPredictions<F> {
    pub fn from_models(
        id: RunId,
        final_model: &Model<F>,
        checkpoints: &[&Model<F>],
        eval: &[WindowSequence<F>],
    ) -> Result<Self> {
        Ok(RunPredictions {
            id,
            single: predict_windows(final_model, eval)?,
            epochs: ensemble_across_epochs(checkpoints, eval)?,
        })
    }
}

pub fn checkpoint_dir(out: &Path, kind: ModelKind, subject: u32) -> PathBuf {
    out.join("checkpoints")
        .join(kind.name())
        .join(format!("subject-{subject:02}"))
}

/// Receives every finished epoch; the elapsed time covers that epoch only.
pub type EpochHook<'a> = dyn FnMut(RunId, &EpochRecord, std::time::Duration) -> Result<()> + 'a;

pub fn train_config(cfg: &ExperimentConfig, kind: ModelKind, seed: u64) -> TrainConfig {
    TrainConfig {
        model: kind,
        seed,
        ..cfg.train
    }
}

/// Trains one run and optionally writes its retained checkpoints.
pub fn train_run<F: Real>(
    cfg: &ExperimentConfig,
    data: &SubjectData<F>,
    kind: ModelKind,
    run: usize,
    checkpoints_to: Option<&Path>,
    hook: &mut EpochHook<'_>,
) -> Result<(RunId, TrainOutcome<F>)> {
    let seed = run_seed(cfg.train.seed, run, data.subject);
    let id = RunId {
        model: kind,
        subject: data.subject,
        run,
        seed,
    };
    let tc = train_config(cfg, kind, seed);
    let mut hook_err = None;
    let mut last = Instant::now();
    let outcome = train(data.train_set(kind), &data.val, &tc, |r| {
        let now = Instant::now();
        if hook_err.is_none() {
            if let Err(e) = hook(id, r, now - last) {
                hook_err = Some(e);
            }
        }
        last = now;
    })?;
    if let Some(e) = hook_err {
        return Err(e);
    }
    if let Some(out) = checkpoints_to {
        let dir = checkpoint_dir(out, kind, data.subject);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for c in &outcome.checkpoints {
            save_checkpoint(
                &dir.join(checkpoint_name(seed, c.epoch)),
                &c.model,
                c.epoch as u32,
                seed,
            )?;
        }
    }
    Ok((id, outcome))
}

/// Loads the retained checkpoints of one run, oldest first.
pub fn load_run_checkpoints<F: Real>(
    out: &Path,
    id: RunId,
    epochs: usize,
    keep: usize,
) -> Result<Vec<Model<F>>> {
    let dir = checkpoint_dir(out, id.model, id.subject);
    let first = epochs.saturating_sub(keep) + 1;
    (first..=epochs)
        .map(|epoch| {
            let path = dir.join(checkpoint_name(id.seed, epoch));
            let stored = load_checkpoint(&path)?;
            if stored.seed != id.seed || stored.epoch as usize != epoch {
                return Err(Error::consistency(
                    &path,
                    "header does not match the file name",
                ));
            }
            if stored.model.precision() != F::PRECISION {
                return Err(Error::consistency(
                    &path,
                    format!(
                        "stored in {} but the run uses {}",
                        stored.model.precision().name(),
                        F::PRECISION.name()
                    ),
                ));
            }
            let model = match stored.model {
                crate::checkpoint::AnyModel::F32(m) => m.cast(),
                crate::checkpoint::AnyModel::F64(m) => m.cast(),
            };
            if model.kind() != id.model {
                return Err(Error::consistency(
                    &path,
                    "checkpoint holds a different model kind",
                ));
            }
            Ok(model)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub model: ModelKind,
    pub subject: u32,
    pub run: usize,
    pub seed: u64,
    pub single: f64,
    pub epoch_ensemble: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccuracy {
    pub model: ModelKind,
    pub subject: u32,
    pub runs: usize,
    pub accuracy: f64,
}

/// Accuracies of every run and of the across-run ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub partition: Partition,
    pub runs: Vec<RunAccuracy>,
    pub run_ensembles: Vec<EnsembleAccuracy>,
}

pub fn method_name(kind: ModelKind, variant: Variant) -> String {
    match variant {
        Variant::Single => kind.name().to_string(),
        Variant::EpochEnsemble => format!("{}+epochs", kind.name()),
        Variant::RunEnsemble => format!("{}+runs", kind.name()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Final-epoch model, accuracy averaged over runs.
    Single,
    /// Mean of the retained checkpoints, accuracy averaged over runs.
    EpochEnsemble,
    /// Mean over runs of the epoch ensembles.
    RunEnsemble,
}

impl Evaluation {
    pub fn from_predictions<F: Real>(
        partition: Partition,
        preds: &[RunPredictions<F>],
    ) -> Result<Self> {
        let mut runs = Vec::new();
        let mut groups: BTreeMap<(u32, u32), Vec<&RunPredictions<F>>> = BTreeMap::new();
        for p in preds {
            runs.push(RunAccuracy {
                model: p.id.model,
                subject: p.id.subject,
                run: p.id.run,
                seed: p.id.seed,
                single: p.single.accuracy()?,
                epoch_ensemble: p.epochs.accuracy()?,
            });
            groups
                .entry((p.id.model.tag(), p.id.subject))
                .or_default()
                .push(p);
        }
        let mut run_ensembles = Vec::new();
        for ((_, subject), g) in groups {
            let parts: Vec<WindowProbs<F>> = g.iter().map(|p| p.epochs.clone()).collect();
            run_ensembles.push(EnsembleAccuracy {
                model: g[0].id.model,
                subject,
                runs: g.len(),
                accuracy: ensemble_across_runs(&parts)?.accuracy()?,
            });
        }
        Ok(Evaluation {
            partition,
            runs,
            run_ensembles,
        })
    }

    pub fn models(&self) -> Vec<ModelKind> {
        let mut m: Vec<ModelKind> = self.runs.iter().map(|r| r.model).collect();
        m.sort_by_key(|k| k.tag());
        m.dedup();
        m
    }

    /// Per-subject accuracy of a model under one aggregation.
    pub fn subject_accuracies(&self, kind: ModelKind, variant: Variant) -> Vec<(u32, f64)> {
        match variant {
            Variant::RunEnsemble => self
                .run_ensembles
                .iter()
                .filter(|e| e.model == kind)
                .map(|e| (e.subject, e.accuracy))
                .collect(),
            _ => {
                let mut by: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
                for r in self.runs.iter().filter(|r| r.model == kind) {
                    let v = if variant == Variant::Single {
                        r.single
                    } else {
                        r.epoch_ensemble
                    };
                    by.entry(r.subject).or_default().push(v);
                }
                by.into_iter().map(|(s, v)| (s, mean(&v))).collect()
            }
        }
    }

    /// Per-subject accuracies of single run `run`.
    pub fn run_accuracies(&self, kind: ModelKind, run: usize) -> Vec<(u32, f64)> {
        self.runs
            .iter()
            .filter(|r| r.model == kind && r.run == run)
            .map(|r| (r.subject, r.single))
            .collect()
    }

    pub fn report(&self, kind: ModelKind, variant: Variant) -> Result<RunReport> {
        Ok(RunReport::new(
            method_name(kind, variant),
            self.partition,
            self.subject_accuracies(kind, variant),
        )?)
    }

    pub fn reports(&self, variants: &[Variant]) -> Result<Vec<RunReport>> {
        let mut out = Vec::new();
        for v in variants {
            for k in self.models() {
                out.push(self.report(k, *v)?);
            }
        }
        Ok(out)
    }
}

/// Trains and evaluates everything in memory. Checkpoints are written when
/// `out` is given and the config asks for them.
pub fn run_experiment<F: Real>(
    cfg: &ExperimentConfig,
    data: &[SubjectData<F>],
    out: Option<&Path>,
    hook: &mut EpochHook<'_>,
) -> Result<Evaluation> {
    let ckpt = out.filter(|_| cfg.ensemble.save_checkpoints);
    let mut preds = Vec::new();
    for &kind in &cfg.models {
        for d in data {
            for run in 0..cfg.ensemble.runs {
                let (id, outcome) = train_run(cfg, d, kind, run, ckpt, hook)?;
                preds.push(RunPredictions::from_models(
                    id,
                    &outcome.model,
                    &outcome.checkpoint_models(),
                    &d.eval,
                )?);
            }
        }
    }
    Evaluation::from_predictions(cfg.partition, &preds)
}
