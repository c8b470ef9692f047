//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use streamaad_core::model::{count_macs, param_count, InputShape, ModelConfig, ModelKind};
use streamaad_core::signal::{preprocess, Band, PreprocessConfig};
use streamaad_core::synth::{generate_trial, SynthConfig};
use streamaad_core::{Precision, Real};

use crate::config::{DataSource, ExperimentConfig};
use crate::container::{Dataset, DatasetWriter, Manifest, Provenance, Stage};
use crate::error::{exit, Error, Result};
use crate::experiment::{
    load_run_checkpoints, load_trials, run_experiment, run_seed, subject_data, Evaluation,
    RunPredictions, SubjectData, Variant,
};
use crate::metrics::{MetricsLog, RunId};
use crate::report::ReportSet;

#[derive(Debug, Parser)]
#[command(
    name = "streamaad",
    version,
    about = "Streaming spatial auditory attention decoding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic EEG dataset.
    Synth(SynthArgs),
    /// Downsample, band-pass and scale a raw dataset.
    Preprocess(PreprocessArgs),
    /// Train every model, subject and run of an experiment.
    Train(ExperimentArgs),
    /// Evaluate the final-epoch checkpoints of a trained experiment.
    Eval(ExperimentArgs),
    /// Evaluate the epoch and run ensembles of a trained experiment.
    Ensemble(ExperimentArgs),
    /// Compare methods across report files with the exact signed-rank test.
    Compare(CompareArgs),
    /// Print parameter and multiply-accumulate counts.
    Count(CountArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator settings as JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub subjects: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: Option<u32>,
    /// Trial duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Alpha amplitude ratio between the attended and the other side.
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Gain random-walk standard deviation per second.
    #[arg(long)]
    pub drift: Option<f64>,
    /// Per-trial spatial mixing strength.
    #[arg(long)]
    pub fingerprint: Option<f64>,
    /// Alpha amplitude relative to the background.
    #[arg(long)]
    pub snr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pass band as LO:HI in Hz.
    #[arg(long, default_value = "1:45", value_parser = parse_band)]
    pub band: Band,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Single causal pass instead of forward-backward filtering.
    #[arg(long)]
    pub causal: bool,
    /// Keep volts instead of converting to microvolts.
    #[arg(long)]
    pub no_scale: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the dataset with a directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report files or experiment output directories.
    #[arg(required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    /// Input as WINDOWSxSAMPLESxCHANNELS.
    #[arg(long, value_parser = parse_shape)]
    pub shape: InputShape,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 7)]
    pub kernel: usize,
}

fn parse_band(s: &str) -> std::result::Result<Band, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    let band = Band {
        lo_hz: lo,
        hi_hz: hi,
    };
    band.validate(streamaad_core::signal::TARGET_FS)
        .map_err(|e| e.to_string())?;
    Ok(band)
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model {s:?}, expected streamaad or cnn"))
}

fn parse_shape(s: &str) -> std::result::Result<InputShape, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let [t, l, c] = parts.as_slice() else {
        return Err("expected WINDOWSxSAMPLESxCHANNELS, e.g. 9x128x32".into());
    };
    let n = |v: &str| v.parse::<usize>().map_err(|e| format!("{v}: {e}"));
    Ok(InputShape {
        windows: n(t)?,
        samples: n(l)?,
        channels: n(c)?,
    })
}

/// `33346` as `33.3K`.
pub fn si(n: u64) -> String {
    let (v, unit) = match n {
        0..=999 => return n.to_string(),
        1_000..=999_999 => (n as f64 / 1e3, "K"),
        1_000_000..=999_999_999 => (n as f64 / 1e6, "M"),
        _ => (n as f64 / 1e9, "G"),
    };
    format!("{v:.1}{unit}")
}

pub fn cmd_count(a: &CountArgs) -> Result<String> {
    let cfg = ModelConfig {
        channels: a.shape.channels,
        hidden: a.hidden,
        kernel: a.kernel,
    };
    cfg.validate()?;
    let params = param_count(a.model, cfg) as u64;
    let macs = count_macs(a.model, cfg, a.shape)?;
    Ok(format!(
        "params: {params} ({}), macs: {macs} ({})",
        si(params),
        si(macs)
    ))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice::<SynthConfig>(&crate::container::read_file(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.subjects {
        cfg.n_subjects = v;
    }
    if let Some(v) = a.trials {
        cfg.n_trials = v;
    }
    if let Some(v) = a.duration {
        cfg.duration_s = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.contrast {
        cfg.attention_contrast = v;
    }
    if let Some(v) = a.drift {
        cfg.drift_strength = v;
    }
    if let Some(v) = a.fingerprint {
        cfg.fingerprint_strength = v;
    }
    if let Some(v) = a.snr {
        cfg.noise_snr = v;
    }
    let plan = cfg.plan()?;
    let mut manifest = Manifest::new(Stage::Raw, cfg.fs, cfg.n_channels);
    manifest.synth = Some(cfg.clone());
    let mut w = DatasetWriter::create(&a.out, manifest)?;
    for meta in plan {
        let t = generate_trial::<f32>(&cfg, meta)?;
        w.push(meta, &t.samples)?;
    }
    let m = w.finish()?;
    Ok(format!(
        "wrote {} trials ({} subjects x {} scenario(s) x {} trials, {} channels, {} s at {} Hz) to {}",
        m.trials.len(),
        cfg.n_subjects,
        cfg.scenarios.len(),
        cfg.n_trials,
        cfg.n_channels,
        cfg.duration_s,
        cfg.fs,
        a.out.display()
    ))
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<String> {
    let ds = Dataset::open(&a.input)?;
    if ds.manifest.stage != Stage::Raw {
        return Err(Error::consistency(
            &a.input,
            "dataset is already preprocessed",
        ));
    }
    let pp = PreprocessConfig {
        band: a.band,
        filter_order: a.order,
        zero_phase: !a.causal,
        scale_to_microvolts: !a.no_scale,
        ..PreprocessConfig::default()
    };
    let mut manifest = Manifest::new(Stage::Processed, pp.target_fs, ds.manifest.n_channels);
    manifest.synth = ds.manifest.synth.clone();
    manifest.provenance = Some(Provenance {
        source: a.input.clone(),
        source_fs: ds.manifest.fs,
        band: pp.band,
        filter_order: pp.filter_order,
        zero_phase: pp.zero_phase,
        scaled_to_microvolts: pp.scale_to_microvolts,
        tool_version: crate::config::TOOL_VERSION.to_string(),
    });
    let mut w = DatasetWriter::create(&a.out, manifest)?;
    for i in 0..ds.len() {
        let p = preprocess(&ds.load_raw(i)?, &pp)?;
        w.push(p.meta, &p.samples)?;
    }
    let m = w.finish()?;
    Ok(format!(
        "preprocessed {} trials to {} Hz, band {}-{} Hz, into {}",
        m.trials.len(),
        m.fs,
        pp.band.lo_hz,
        pp.band.hi_hz,
        a.out.display()
    ))
}

fn resolve(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(d) = &a.data {
        cfg.data = DataSource::Path(d.clone());
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e as usize;
    }
    if let Some(r) = a.runs {
        cfg.ensemble.runs = r as usize;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare<F: Real>(cfg: &mut ExperimentConfig) -> Result<Vec<SubjectData<F>>> {
    let loaded = load_trials(cfg)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    cfg.band = Some(loaded.band);
    subject_data(&loaded.trials, cfg.partition, &cfg.windows)
}

fn train_typed<F: Real>(mut cfg: ExperimentConfig) -> Result<String> {
    let data = prepare::<F>(&mut cfg)?;
    let out = cfg.output_dir.clone();
    cfg.write_provenance(&out)?;
    let mut log = MetricsLog::create(&out)?;
    let epochs = cfg.train.epochs;
    let mut hook = |id: RunId, r: &streamaad_core::training::EpochRecord, dt| -> Result<()> {
        log.record(id, r, dt)?;
        if r.epoch == epochs {
            let val = r
                .val_accuracy
                .map(|v| format!(", val accuracy {:.2}%", v * 100.0))
                .unwrap_or_default();
            println!(
                "{} subject {} run {}: train loss {:.4}, train accuracy {:.2}%{val}",
                id.model.name(),
                id.subject,
                id.run,
                r.train_loss,
                r.train_accuracy * 100.0
            );
        }
        Ok(())
    };
    let evaluation = run_experiment(&cfg, &data, Some(&out), &mut hook)?;
    log.flush()?;
    let reports = ReportSet::build(evaluation.reports(&[Variant::Single])?)?;
    Ok(format!("{}\nwrote {}", reports.to_text(), out.display()))
}

fn evaluate_typed<F: Real>(mut cfg: ExperimentConfig, ensembles: bool) -> Result<String> {
    let data = prepare::<F>(&mut cfg)?;
    let out = cfg.output_dir.clone();
    let keep = if ensembles {
        cfg.train.checkpoint_last_k
    } else {
        1
    };
    let mut preds = Vec::new();
    for &kind in &cfg.models {
        for d in &data {
            for run in 0..cfg.ensemble.runs {
                let id = RunId {
                    model: kind,
                    subject: d.subject,
                    run,
                    seed: run_seed(cfg.train.seed, run, d.subject),
                };
                let models = load_run_checkpoints::<F>(&out, id, cfg.train.epochs, keep)?;
                let refs: Vec<_> = models.iter().collect();
                preds.push(RunPredictions::from_models(
                    id,
                    models.last().unwrap(),
                    &refs,
                    &d.eval,
                )?);
            }
        }
    }
    let evaluation = Evaluation::from_predictions(cfg.partition, &preds)?;
    let variants: &[Variant] = if ensembles {
        &[
            Variant::Single,
            Variant::EpochEnsemble,
            Variant::RunEnsemble,
        ]
    } else {
        &[Variant::Single]
    };
    let reports = ReportSet::build(evaluation.reports(variants)?)?;
    let dir = out.join(if ensembles { "ensemble" } else { "eval" });
    cfg.write_provenance(&dir)?;
    reports.write(&dir, &cfg.reports)?;
    let mut text = serde_json::to_string_pretty(&evaluation).expect("evaluation serializes");
    text.push('\n');
    crate::container::write_file(&dir.join("accuracies.json"), text.as_bytes())?;
    Ok(format!("{}\nwrote {}", reports.to_text(), dir.display()))
}

fn by_precision(
    cfg: ExperimentConfig,
    f32_path: fn(ExperimentConfig) -> Result<String>,
    f64_path: fn(ExperimentConfig) -> Result<String>,
) -> Result<String> {
    match cfg.train.precision {
        Precision::F32 => f32_path(cfg),
        Precision::F64 => f64_path(cfg),
    }
}

pub fn cmd_compare(a: &CompareArgs) -> Result<String> {
    let mut all = Vec::new();
    for p in &a.reports {
        let set = ReportSet::read(p)?;
        for mut r in set.reports {
            if all
                .iter()
                .any(|x: &streamaad_core::eval::RunReport| x.method == r.method)
            {
                r.method = format!("{}@{}", r.method, p.display());
            }
            all.push(r);
        }
    }
    Ok(ReportSet::build(all)?.to_text())
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Train(a) => by_precision(resolve(a)?, train_typed::<f32>, train_typed::<f64>),
        Command::Eval(a) => by_precision(
            resolve(a)?,
            |c| evaluate_typed::<f32>(c, false),
            |c| evaluate_typed::<f64>(c, false),
        ),
        Command::Ensemble(a) => by_precision(
            resolve(a)?,
            |c| evaluate_typed::<f32>(c, true),
            |c| evaluate_typed::<f64>(c, true),
        ),
        Command::Compare(a) => cmd_compare(a),
        Command::Count(a) => cmd_count(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}
