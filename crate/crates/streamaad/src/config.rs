//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamaad_core::data::Partition;
use streamaad_core::model::ModelKind;
use streamaad_core::signal::{Band, WindowSpec};
use streamaad_core::synth::SynthConfig;
use streamaad_core::training::TrainConfig;

use crate::container::{read_file, write_file};
use crate::error::{Error, Result};

pub const CONFIG_SCHEMA: u32 = 1;
pub const RESOLVED_CONFIG_FILE: &str = "config.json";
pub const VERSION_FILE: &str = "VERSION";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Where trials come from: a dataset directory (raw or processed) or a
/// generator configuration evaluated in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Path(PathBuf),
    Synth(SynthConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Independently seeded runs per model and subject.
    pub runs: usize,
    /// Write the retained checkpoints of every run to disk.
    pub save_checkpoints: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            runs: 1,
            save_checkpoints: true,
        }
    }
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::StreamAad]
}

fn default_order() -> usize {
    4
}

fn default_reports() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::Text]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub data: DataSource,
    #[serde(default)]
    pub partition: Partition,
    /// Defaults to 1-45 Hz within trials and 7-30 Hz across trials.
    #[serde(default)]
    pub band: Option<Band>,
    #[serde(default = "default_order")]
    pub filter_order: usize,
    #[serde(default)]
    pub windows: WindowSpec,
    /// Restrict to these subjects; all when absent.
    #[serde(default)]
    pub subjects: Option<Vec<u32>>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_reports")]
    pub reports: Vec<ReportFormat>,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA,
            data,
            partition: Partition::default(),
            band: None,
            filter_order: default_order(),
            windows: WindowSpec::default(),
            subjects: None,
            models: default_models(),
            train: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            output_dir: default_output(),
            reports: default_reports(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let cfg: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn band(&self) -> Band {
        self.band.unwrap_or(match self.partition {
            Partition::WithinTrial => Band::BROADBAND,
            Partition::CrossTrial => Band::ALPHA_BETA,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA})",
                self.schema_version
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        let mut m = self.models.clone();
        m.sort_by_key(|k| k.tag());
        m.dedup();
        if m.len() != self.models.len() {
            return Err(Error::Config("models must not repeat".into()));
        }
        if self.ensemble.runs == 0 {
            return Err(Error::Config("ensemble.runs must be at least 1".into()));
        }
        if self.filter_order == 0 {
            return Err(Error::Config("filter_order must be at least 1".into()));
        }
        if let Some(s) = &self.subjects {
            if s.is_empty() {
                return Err(Error::Config("subjects list is empty".into()));
            }
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.train.validate()?;
        Ok(())
    }

    /// The config with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.band = Some(self.band());
        c
    }

    /// Writes the resolved config and the tool version into `dir`.
    pub fn write_provenance(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut text = serde_json::to_string_pretty(&self.resolved()).expect("config serializes");
        text.push('\n');
        write_file(&dir.join(RESOLVED_CONFIG_FILE), text.as_bytes())?;
        write_file(
            &dir.join(VERSION_FILE),
            format!("{TOOL_VERSION}\n").as_bytes(),
        )
    }
}
