use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{check_params, ModelConfig};
use crate::error::{Error, Result};
use crate::fingerprint::{fingerprint, read_json, write_sorted_json};
use crate::params::ParamStore;
use crate::preprocess::{SensorStats, Vocabulary};
use crate::tensor::Tensor;

use super::adam::AdamState;
use super::log::EpochRecord;
use super::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const TENSOR_FILE: &str = "tensors.bin";
const DTYPE: &str = "f64le";
const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";

/// Model weights, optimizer state and everything needed to preprocess
/// inputs the same way as during training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: AdamState,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub metrics: Option<EpochRecord>,
    pub vocab: Vocabulary,
    pub sensor_stats: SensorStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the tensor file.
    pub offset: u64,
    /// Element count.
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub arrays: Vec<ArrayEntry>,
    pub adam_step: u64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub metrics: Option<EpochRecord>,
    pub vocab: Vocabulary,
    pub vocab_fingerprint: String,
    pub sensor_stats: SensorStats,
    pub sensor_stats_fingerprint: String,
}

impl Checkpoint {
    fn ordered_arrays(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self.params.iter().map(|(n, t)| (n.to_owned(), t)).collect();
        out.extend(self.adam.m.iter().map(|(n, t)| (format!("{M_PREFIX}{n}"), t)));
        out.extend(self.adam.v.iter().map(|(n, t)| (format!("{V_PREFIX}{n}"), t)));
        out
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut arrays = Vec::new();
    for (name, t) in ckpt.ordered_arrays() {
        arrays.push(ArrayEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: DTYPE.into(),
            offset: bytes.len() as u64,
            length: t.len() as u64,
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        arrays,
        adam_step: ckpt.adam.t,
        model_config: ckpt.model_config.clone(),
        train_config: ckpt.train_config.clone(),
        epoch: ckpt.epoch,
        metrics: ckpt.metrics.clone(),
        vocab: ckpt.vocab.clone(),
        vocab_fingerprint: ckpt.vocab.fingerprint(),
        sensor_stats: ckpt.sensor_stats.clone(),
        sensor_stats_fingerprint: fingerprint(&ckpt.sensor_stats)?,
    };
    let bin = dir.join(TENSOR_FILE);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    write_sorted_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST_FILE);
    let raw: serde_json::Value = read_json(&path)?;
    let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let m: CheckpointManifest = serde_json::from_value(raw)?;
    if m.vocab.fingerprint() != m.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "vocabulary",
            expected: m.vocab_fingerprint,
            found: m.vocab.fingerprint(),
        });
    }
    let stats_fp = fingerprint(&m.sensor_stats)?;
    if stats_fp != m.sensor_stats_fingerprint {
        return Err(Error::FingerprintMismatch {
            what: "sensor stats",
            expected: m.sensor_stats_fingerprint,
            found: stats_fp,
        });
    }

    let expected: std::collections::BTreeMap<String, Vec<usize>> = crate::encoders::param_specs(&m.model_config)
        .into_iter()
        .flat_map(|s| {
            [
                (format!("{M_PREFIX}{}", s.name), s.shape.clone()),
                (format!("{V_PREFIX}{}", s.name), s.shape.clone()),
                (s.name, s.shape),
            ]
        })
        .collect();
    let mut need = 0u64;
    for a in &m.arrays {
        if a.dtype != DTYPE {
            return Err(Error::invalid(format!(
                "array `{}` has unsupported dtype {}",
                a.name, a.dtype
            )));
        }
        let want = expected
            .get(&a.name)
            .ok_or_else(|| Error::invalid(format!("unexpected checkpoint array `{}`", a.name)))?;
        if &a.shape != want || a.shape.iter().product::<usize>() as u64 != a.length {
            return Err(Error::CheckpointShape {
                name: a.name.clone(),
                expected: want.clone(),
                found: a.shape.clone(),
            });
        }
        need = need.max(a.offset + a.length * 8);
    }
    let bin = dir.join(TENSOR_FILE);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if (bytes.len() as u64) < need {
        return Err(Error::CheckpointTruncated {
            expected: need,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > need {
        return Err(Error::invalid(format!(
            "tensor file has {} trailing bytes",
            bytes.len() as u64 - need
        )));
    }

    let mut params = ParamStore::new();
    let mut mom = ParamStore::new();
    let mut vel = ParamStore::new();
    for a in &m.arrays {
        let start = a.offset as usize;
        let data: Vec<f64> = bytes[start..start + a.length as usize * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::from_vec(&a.shape, data)?;
        if let Some(n) = a.name.strip_prefix(M_PREFIX) {
            mom.insert(n, t);
        } else if let Some(n) = a.name.strip_prefix(V_PREFIX) {
            vel.insert(n, t);
        } else {
            params.insert(a.name.clone(), t);
        }
    }
    check_params(&m.model_config, &params)?;
    check_params(&m.model_config, &mom)?;
    check_params(&m.model_config, &vel)?;
    Ok(Checkpoint {
        params,
        adam: AdamState {
            t: m.adam_step,
            m: mom,
            v: vel,
        },
        model_config: m.model_config,
        train_config: m.train_config,
        epoch: m.epoch,
        metrics: m.metrics,
        vocab: m.vocab,
        sensor_stats: m.sensor_stats,
    })
}
