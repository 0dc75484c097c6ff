//! On-disk dataset layout: `manifest.json`, `frames/<id>.rgb`, `meta/<id>.json`.
//!
//! Frames are raw 8-bit RGB, `16 × size × size × 3` bytes, no header.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    generate_scenario, plan_kinds, sample_seed, ActionLabel, ClassDistribution, RenderConfig, Sample, ScenarioKind,
    ScenarioSpec, SensorReading, VideoClip,
};
use crate::error::{Error, Result};
use crate::fingerprint::{fingerprint, sha256_hex, to_sorted_json};
use crate::parallel::Parallelism;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const WRITE_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub kind: ScenarioKind,
    pub action: ActionLabel,
    pub frames_path: String,
    pub frames_bytes: u64,
    pub frames_sha256: String,
    pub meta_path: String,
    pub meta_bytes: u64,
    pub meta_sha256: String,
    pub description: String,
    pub explanation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub generation_seed: u64,
    pub render: RenderConfig,
    pub target_distribution: ClassDistribution,
    pub class_counts: BTreeMap<ActionLabel, usize>,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn fingerprint(&self) -> Result<String> {
        fingerprint(self)
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|r| r.id.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SampleMeta {
    id: String,
    kind: ScenarioKind,
    action: ActionLabel,
    size: usize,
    sensor: SensorReading,
    description: String,
    explanation: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Generates `n` samples and writes them under `out`.
pub fn generate_dataset(
    n: usize,
    seed: u64,
    dist: &ClassDistribution,
    render_cfg: &RenderConfig,
    out: &Path,
    par: Parallelism,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    dist.validate()?;
    render_cfg.validate()?;
    for sub in ["frames", "meta"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let kinds = plan_kinds(n, seed, dist);
    let mut records = Vec::with_capacity(n);
    let mut class_counts: BTreeMap<ActionLabel, usize> = ActionLabel::ALL.iter().map(|a| (*a, 0)).collect();
    let indexed: Vec<(usize, ScenarioKind)> = kinds.into_iter().enumerate().collect();
    for chunk in indexed.chunks(WRITE_CHUNK) {
        let samples: Result<Vec<Sample>> = par
            .map(chunk, |&(i, kind)| {
                let spec = ScenarioSpec::sample(kind, sample_seed(seed, i));
                let mut s = generate_scenario(&spec, render_cfg)?;
                s.id = format!("s{i:06}");
                Ok(s)
            })
            .into_iter()
            .collect();
        for s in samples? {
            records.push(write_sample(out, &s)?);
            *class_counts.entry(s.action).or_default() += 1;
        }
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        generation_seed: seed,
        render: *render_cfg,
        target_distribution: dist.clone(),
        class_counts,
        samples: records,
    };
    write_file(&out.join(MANIFEST_FILE), to_sorted_json(&manifest)?.as_bytes())?;
    Ok(manifest)
}

fn write_sample(root: &Path, s: &Sample) -> Result<SampleRecord> {
    let frames_path = format!("frames/{}.rgb", s.id);
    let meta_path = format!("meta/{}.json", s.id);
    write_file(&root.join(&frames_path), &s.clip.data)?;
    let meta = SampleMeta {
        id: s.id.clone(),
        kind: s.kind,
        action: s.action,
        size: s.clip.size,
        sensor: s.sensor,
        description: s.description.clone(),
        explanation: s.explanation.clone(),
    };
    let meta_text = to_sorted_json(&meta)?;
    write_file(&root.join(&meta_path), meta_text.as_bytes())?;
    Ok(SampleRecord {
        id: s.id.clone(),
        kind: s.kind,
        action: s.action,
        frames_path,
        frames_bytes: s.clip.data.len() as u64,
        frames_sha256: sha256_hex(&s.clip.data),
        meta_path,
        meta_bytes: meta_text.len() as u64,
        meta_sha256: sha256_hex(meta_text.as_bytes()),
        description: s.description.clone(),
        explanation: s.explanation.clone(),
    })
}

/// Streaming reader over a dataset directory; yields samples in manifest order.
#[derive(Debug)]
pub struct DatasetReader {
    root: PathBuf,
    manifest: DatasetManifest,
    next: usize,
}

pub fn open_dataset(path: &Path) -> Result<DatasetReader> {
    let manifest_path = path.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::invalid("manifest lacks schema_version"))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::IncompatibleSchema {
            found: version as u32,
            expected: SCHEMA_VERSION,
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw)?;
    manifest.render.validate()?;
    let mut seen = HashSet::new();
    for r in &manifest.samples {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::CorruptRecord {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(DatasetReader {
        root: path.to_path_buf(),
        manifest,
        next: 0,
    })
}

/// Loads and validates every sample.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    open_dataset(path)?.collect()
}

impl DatasetReader {
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Reads and validates the sample described by `record`.
    pub fn read_record(&self, record: &SampleRecord) -> Result<Sample> {
        let corrupt = |reason: String| Error::CorruptRecord {
            id: record.id.clone(),
            reason,
        };
        let size = self.manifest.render.size;
        let frames =
            fs::read(self.root.join(&record.frames_path)).map_err(|e| corrupt(format!("cannot read frames: {e}")))?;
        let expected = VideoClip::byte_len(size) as u64;
        if frames.len() as u64 != record.frames_bytes || record.frames_bytes != expected {
            return Err(corrupt(format!(
                "frame payload has {} bytes, manifest records {} (expected {expected})",
                frames.len(),
                record.frames_bytes
            )));
        }
        if sha256_hex(&frames) != record.frames_sha256 {
            return Err(corrupt("frame payload checksum mismatch".into()));
        }
        let meta_bytes =
            fs::read(self.root.join(&record.meta_path)).map_err(|e| corrupt(format!("cannot read metadata: {e}")))?;
        if meta_bytes.len() as u64 != record.meta_bytes || sha256_hex(&meta_bytes) != record.meta_sha256 {
            return Err(corrupt("metadata length or checksum mismatch".into()));
        }
        let meta: SampleMeta =
            serde_json::from_slice(&meta_bytes).map_err(|e| corrupt(format!("unparseable metadata: {e}")))?;
        if meta.id != record.id || meta.action != record.action || meta.kind != record.kind {
            return Err(corrupt("metadata disagrees with manifest".into()));
        }
        if meta.size != size {
            return Err(corrupt(format!("frame size {} != render size {size}", meta.size)));
        }
        if meta.kind.action() != meta.action {
            return Err(corrupt("action does not match scenario kind".into()));
        }
        if meta.description.trim().is_empty() || meta.explanation.trim().is_empty() {
            return Err(corrupt("empty description or explanation".into()));
        }
        meta.sensor.validate().map_err(|e| corrupt(e.to_string()))?;
        Ok(Sample {
            id: meta.id,
            kind: meta.kind,
            clip: VideoClip::new(size, frames).map_err(|e| corrupt(e.to_string()))?,
            sensor: meta.sensor,
            description: meta.description,
            action: meta.action,
            explanation: meta.explanation,
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.manifest.samples.get(self.next)?.clone();
        self.next += 1;
        Some(self.read_record(&record))
    }
}
