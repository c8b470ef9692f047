//! On-disk dataset container: a JSON manifest plus one binary payload per
//! trial.
//!
//! A payload is a 16-byte header (`"AADT"`, format version, rows, cols as
//! little-endian `u32`) followed by `rows * cols` little-endian `f32`
//! samples in time-major order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamaad_core::data::TrialMeta;
use streamaad_core::signal::{Band, ProcessedTrial, RawTrial};
use streamaad_core::synth::SynthConfig;
use streamaad_core::Tensor;

use crate::error::{Error, Result};

pub const PAYLOAD_MAGIC: &[u8; 4] = b"AADT";
pub const PAYLOAD_VERSION: u32 = 1;
pub const PAYLOAD_HEADER_LEN: usize = 16;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Volts at the recording rate.
    Raw,
    /// Downsampled, filtered, possibly scaled.
    Processed,
}

/// How a processed dataset was derived from its raw source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source: PathBuf,
    pub source_fs: u32,
    pub band: Band,
    pub filter_order: usize,
    pub zero_phase: bool,
    pub scaled_to_microvolts: bool,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    #[serde(flatten)]
    pub meta: TrialMeta,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub stage: Stage,
    pub fs: u32,
    pub n_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub trials: Vec<TrialEntry>,
}

impl Manifest {
    pub fn new(stage: Stage, fs: u32, n_channels: usize) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA,
            tool_version: crate::config::TOOL_VERSION.to_string(),
            stage,
            fs,
            n_channels,
            synth: None,
            provenance: None,
            trials: Vec::new(),
        }
    }

    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.trials.iter().map(|t| t.meta.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

pub fn payload_name(meta: &TrialMeta) -> String {
    format!(
        "s{:02}_{}_t{:02}.aadt",
        meta.subject, meta.scenario, meta.trial
    )
}

pub fn encode_payload(samples: &Tensor<f32>) -> Vec<u8> {
    let (rows, cols) = (samples.shape()[0], samples.shape()[1]);
    let mut out = Vec::with_capacity(PAYLOAD_HEADER_LEN + 4 * samples.len());
    out.extend_from_slice(PAYLOAD_MAGIC);
    out.extend_from_slice(&PAYLOAD_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in samples.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

/// Parses a payload; `path` only labels errors.
pub fn decode_payload(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    if bytes.len() < PAYLOAD_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            expected: PAYLOAD_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != PAYLOAD_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "AADT",
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let version = le_u32(&bytes[4..]);
    if version != PAYLOAD_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            found: version,
            supported: PAYLOAD_VERSION,
        });
    }
    let rows = le_u32(&bytes[8..]) as usize;
    let cols = le_u32(&bytes[12..]) as usize;
    let expected = PAYLOAD_HEADER_LEN as u64 + 4 * rows as u64 * cols as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes[PAYLOAD_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::new([rows, cols], data)?)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes trials into `dir` as they are produced, then the manifest.
pub struct DatasetWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl DatasetWriter {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(DatasetWriter {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn push(&mut self, meta: TrialMeta, samples: &Tensor<f32>) -> Result<()> {
        let file = payload_name(&meta);
        let path = self.dir.join(&file);
        if samples.ndim() != 2 || samples.shape()[1] != self.manifest.n_channels {
            return Err(Error::consistency(
                &path,
                format!(
                    "trial shape {:?} does not have {} channels",
                    samples.shape(),
                    self.manifest.n_channels
                ),
            ));
        }
        write_file(&path, &encode_payload(samples))?;
        self.manifest.trials.push(TrialEntry {
            meta,
            file,
            rows: samples.shape()[0],
            cols: samples.shape()[1],
        });
        Ok(())
    }

    pub fn finish(self) -> Result<Manifest> {
        write_manifest(&self.dir, &self.manifest)?;
        Ok(self.manifest)
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&path, text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::malformed(&path, "manifest", e))?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(MANIFEST_SCHEMA as u64) {
        return Err(Error::UnsupportedVersion {
            path,
            found: version.unwrap_or(0) as u32,
            supported: MANIFEST_SCHEMA,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::malformed(&path, "manifest", e))
}

/// Read access to a dataset directory, one trial at a time.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest: read_manifest(dir)?,
        })
    }

    /// Loads the payload of trial entry `i`, checked against the manifest.
    pub fn load(&self, i: usize) -> Result<Tensor<f32>> {
        let entry = &self.manifest.trials[i];
        let path = self.dir.join(&entry.file);
        let t = decode_payload(&read_file(&path)?, &path)?;
        if t.shape() != [entry.rows, entry.cols] || entry.cols != self.manifest.n_channels {
            return Err(Error::consistency(
                &path,
                format!(
                    "payload is {:?} but the manifest lists {}x{} with {} channels",
                    t.shape(),
                    entry.rows,
                    entry.cols,
                    self.manifest.n_channels
                ),
            ));
        }
        Ok(t)
    }

    pub fn load_raw(&self, i: usize) -> Result<RawTrial<f32>> {
        Ok(RawTrial {
            samples: self.load(i)?,
            fs: self.manifest.fs,
            meta: self.manifest.trials[i].meta,
        })
    }

    pub fn load_processed(&self, i: usize) -> Result<ProcessedTrial<f32>> {
        Ok(ProcessedTrial {
            samples: self.load(i)?,
            fs: self.manifest.fs,
            meta: self.manifest.trials[i].meta,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.trials.is_empty()
    }
}
