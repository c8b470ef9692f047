//! Binary checkpoint format.
//!
//! Layout, all integers little-endian `u32` unless noted:
//!
//! ```text
//! "SAADCKPT" version kind channels hidden kernel precision epoch seed(u64) n_tensors
//! n_tensors x { name_len name(utf-8) ndim dims[ndim] data[elements] }
//! ```
//!
//! Tensor data is stored in the model's precision, in [`ParamSet`] order.

use std::path::Path;

use streamaad_core::model::{Model, ModelConfig, ModelKind, ParamSet};
use streamaad_core::{Precision, Real, Tensor};

use crate::container::{read_file, write_file};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAADCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model in either storage precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl AnyModel {
    pub fn precision(&self) -> Precision {
        match self {
            AnyModel::F32(_) => Precision::F32,
            AnyModel::F64(_) => Precision::F64,
        }
    }

    pub fn into_f32(self) -> Option<Model<f32>> {
        match self {
            AnyModel::F32(m) => Some(m),
            AnyModel::F64(_) => None,
        }
    }

    pub fn into_f64(self) -> Option<Model<f64>> {
        match self {
            AnyModel::F64(m) => Some(m),
            AnyModel::F32(_) => None,
        }
    }
}

/// A model with the run it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCheckpoint {
    pub epoch: u32,
    pub seed: u64,
    pub model: AnyModel,
}

pub fn checkpoint_name(seed: u64, epoch: usize) -> String {
    format!("run-{seed:016x}_epoch-{epoch:04}.ckpt")
}

pub fn encode_checkpoint<F: Real>(model: &Model<F>, epoch: u32, seed: u64) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    let put = |v: u32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put(CHECKPOINT_VERSION, &mut out);
    put(model.kind().tag(), &mut out);
    put(cfg.channels as u32, &mut out);
    put(cfg.hidden as u32, &mut out);
    put(cfg.kernel as u32, &mut out);
    put(F::PRECISION.tag(), &mut out);
    put(epoch, &mut out);
    out.extend_from_slice(&seed.to_le_bytes());
    let named = model.named_tensors();
    put(named.len() as u32, &mut out);
    for (name, t) in named {
        put(name.len() as u32, &mut out);
        out.extend_from_slice(name.as_bytes());
        put(t.ndim() as u32, &mut out);
        for &d in t.shape() {
            put(d as u32, &mut out);
        }
        for &v in t.data() {
            match F::PRECISION {
                Precision::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                Precision::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.into(),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn read_tensors<F: Real>(
    r: &mut Reader<'_>,
    expected: &Model<F>,
    n: usize,
) -> Result<Vec<Tensor<F>>> {
    let named = expected.named_tensors();
    if n != named.len() {
        return Err(Error::consistency(
            r.path,
            format!("{n} tensors stored, {} expected", named.len()),
        ));
    }
    let width = F::PRECISION.byte_width();
    let mut out = Vec::with_capacity(n);
    for (want_name, want) in named {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::malformed(r.path, "tensor name", e))?;
        if name != want_name {
            return Err(Error::consistency(
                r.path,
                format!("tensor {name:?} found where {want_name:?} was expected"),
            ));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != want.shape() {
            return Err(Error::consistency(
                r.path,
                format!(
                    "tensor {name} has shape {shape:?}, expected {:?}",
                    want.shape()
                ),
            ));
        }
        let raw = r.take(want.len() * width)?;
        let data = raw
            .chunks_exact(width)
            .map(|c| match F::PRECISION {
                Precision::F32 => {
                    F::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64)
                }
                Precision::F64 => F::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())),
            })
            .collect();
        out.push(Tensor::new(shape, data)?);
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<StoredCheckpoint> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "SAADCKPT",
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let kind_tag = r.u32()?;
    let kind = ModelKind::from_tag(kind_tag).ok_or_else(|| {
        Error::malformed(
            path,
            "checkpoint header",
            format!("unknown model kind {kind_tag}"),
        )
    })?;
    let config = ModelConfig {
        channels: r.u32()? as usize,
        hidden: r.u32()? as usize,
        kernel: r.u32()? as usize,
    };
    config
        .validate()
        .map_err(|e| Error::malformed(path, "checkpoint header", e))?;
    let prec_tag = r.u32()?;
    let precision = Precision::from_tag(prec_tag).ok_or_else(|| {
        Error::malformed(
            path,
            "checkpoint header",
            format!("unknown precision {prec_tag}"),
        )
    })?;
    let epoch = r.u32()?;
    let seed = r.u64()?;
    let n = r.u32()? as usize;
    let model = match precision {
        Precision::F32 => {
            let shape = Model::<f32>::zeros(kind, config);
            let tensors = read_tensors(&mut r, &shape, n)?;
            AnyModel::F32(Model::from_tensors(kind, config, tensors)?)
        }
        Precision::F64 => {
            let shape = Model::<f64>::zeros(kind, config);
            let tensors = read_tensors(&mut r, &shape, n)?;
            AnyModel::F64(Model::from_tensors(kind, config, tensors)?)
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::malformed(
            path,
            "checkpoint",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(StoredCheckpoint { epoch, seed, model })
}

pub fn save_checkpoint<F: Real>(
    path: &Path,
    model: &Model<F>,
    epoch: u32,
    seed: u64,
) -> Result<()> {
    write_file(path, &encode_checkpoint(model, epoch, seed))
}

pub fn load_checkpoint(path: &Path) -> Result<StoredCheckpoint> {
    decode_checkpoint(&read_file(path)?, path)
}
