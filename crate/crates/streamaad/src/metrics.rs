//! Per-epoch metrics log.
//!
//! `metrics.jsonl` holds one record per epoch and split and is a pure
//! function of the data and configuration. Wall-clock times go to the
//! `timing.jsonl` sidecar so that the main log stays byte-reproducible.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use streamaad_core::model::ModelKind;
use streamaad_core::training::EpochRecord;

use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model: ModelKind,
    pub subject: u32,
    pub run: usize,
    pub seed: u64,
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub model: ModelKind,
    pub subject: u32,
    pub run: usize,
    pub epoch: usize,
    pub wall_s: f64,
}

/// Identifies the run an epoch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunId {
    pub model: ModelKind,
    pub subject: u32,
    pub run: usize,
    pub seed: u64,
}

pub fn epoch_records(id: RunId, r: &EpochRecord) -> Vec<MetricRecord> {
    let mut out = vec![MetricRecord {
        model: id.model,
        subject: id.subject,
        run: id.run,
        seed: id.seed,
        epoch: r.epoch,
        split: Split::Train,
        loss: r.train_loss,
        accuracy: r.train_accuracy,
    }];
    if let (Some(loss), Some(accuracy)) = (r.val_loss, r.val_accuracy) {
        out.push(MetricRecord {
            split: Split::Val,
            loss,
            accuracy,
            ..out[0]
        });
    }
    out
}

struct Sink {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Sink {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Sink {
            path,
            w: BufWriter::new(f),
        })
    }

    fn line<T: Serialize>(&mut self, v: &T) -> Result<()> {
        let mut s = serde_json::to_string(v).expect("record serializes");
        s.push('\n');
        self.w
            .write_all(s.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub struct MetricsLog {
    metrics: Sink,
    timing: Sink,
}

impl MetricsLog {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(MetricsLog {
            metrics: Sink::create(dir.join(METRICS_FILE))?,
            timing: Sink::create(dir.join(TIMING_FILE))?,
        })
    }

    pub fn record(&mut self, id: RunId, r: &EpochRecord, elapsed: Duration) -> Result<()> {
        for m in epoch_records(id, r) {
            self.metrics.line(&m)?;
        }
        self.timing.line(&TimingRecord {
            model: id.model,
            subject: id.subject,
            run: id.run,
            epoch: r.epoch,
            wall_s: elapsed.as_secs_f64(),
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.timing.flush()
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::malformed(path, "metrics record", e)))
        .collect()
}
