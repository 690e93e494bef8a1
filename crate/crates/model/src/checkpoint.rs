//! Binary checkpoints: an 8-byte magic, a little-endian `u32` version, a
//! `u64` header length, a JSON header, then every tensor as little-endian
//! `f64` in header order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use hoi_core::{HoiError, Result};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::Model;
use crate::params::{Param, ParamStore};
use crate::tensor::Tensor;
use crate::train::{AdamState, SamplerState, TrainState};
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"FHOICKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    #[serde(default)]
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    step: usize,
    t: u64,
    sampler: SamplerState,
    moments: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
    params: Vec<TensorMeta>,
    optimizer: Option<OptimizerMeta>,
}

fn meta(name: &str, t: &Tensor, trainable: bool) -> TensorMeta {
    TensorMeta {
        name: name.to_string(),
        rows: t.rows,
        cols: t.cols,
        trainable,
    }
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    for v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read, rows: usize, cols: usize) -> Result<Tensor> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| HoiError::Format("tensor shape overflows".into()))?;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|_| HoiError::Format("checkpoint is truncated".into()))?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor::from_vec(rows, cols, data))
}

/// Writes to a sibling temporary file first so a failed save leaves no partial checkpoint.
pub fn save(path: &Path, model: &Model, state: Option<&TrainState>) -> Result<()> {
    let optimizer = state.map(|s| OptimizerMeta {
        step: s.step,
        t: s.adam.t,
        sampler: s.sampler.clone(),
        moments: s.adam.m.iter().map(|(n, t)| meta(n, t, false)).collect(),
    });
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        params: model.params.iter().map(|p| meta(&p.name, &p.value, p.trainable)).collect(),
        optimizer,
    };
    let json = serde_json::to_vec(&header)?;
    let tmp = path.with_extension("partial");
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in model.params.iter() {
            write_tensor(&mut w, &p.value)?;
        }
        if let Some(s) = state {
            for (name, m) in &s.adam.m {
                write_tensor(&mut w, m)?;
                let v = s.adam.v.get(name).ok_or_else(|| HoiError::Lookup(format!("no second moment for {name}")))?;
                write_tensor(&mut w, v)?;
            }
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(std::fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn load(path: &Path) -> Result<(Model, Option<TrainState>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| HoiError::Format("file too short for a checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(HoiError::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(HoiError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| HoiError::Format("checkpoint header is truncated".into()))?;
    let header: Header = serde_json::from_slice(&json)?;
    header.config.validate()?;
    let mut params = ParamStore::default();
    for m in &header.params {
        let t = read_tensor(&mut r, m.rows, m.cols)?;
        params.insert(Param::new(m.name.clone(), t, m.trainable));
    }
    let state = match header.optimizer {
        None => None,
        Some(o) => {
            let mut adam = AdamState {
                t: o.t,
                ..AdamState::default()
            };
            for m in &o.moments {
                adam.m.insert(m.name.clone(), read_tensor(&mut r, m.rows, m.cols)?);
                adam.v.insert(m.name.clone(), read_tensor(&mut r, m.rows, m.cols)?);
            }
            Some(TrainState {
                step: o.step,
                adam,
                sampler: o.sampler,
            })
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(HoiError::Format("trailing bytes after checkpoint data".into()));
    }
    let model = Model::from_parts(header.config, header.vocab, params)?;
    Ok((model, state))
}
