use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoders::{export_attention, write_attention_csv, AttentionSource};
use crate::error::{Error, Result};
use crate::fingerprint::fingerprint;
use crate::fusion::BeamHypothesis;
use crate::model::{predict, prepare_sample};
use crate::preprocess::{detokenize, EOS};
use crate::synthdata::{ActionLabel, Sample};
use crate::training::Checkpoint;

#[derive(Clone, Debug, Default)]
pub struct ExplainOptions<'a> {
    /// Fingerprints the caller preprocessed with; must match the checkpoint.
    pub vocab_fingerprint: Option<&'a str>,
    pub sensor_stats_fingerprint: Option<&'a str>,
    /// Where to write attention CSVs, if wanted.
    pub attention_dir: Option<&'a Path>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub id: String,
    pub action: ActionLabel,
    pub probabilities: BTreeMap<String, f64>,
    pub explanation: Option<String>,
    pub beams: Vec<BeamHypothesis>,
    pub attention_files: Vec<String>,
    /// Wall-clock time of preprocessing, forward pass and decoding.
    pub latency_ms: f64,
}

/// Preprocesses a raw sample with the checkpoint's vocabulary and sensor
/// statistics, predicts its action and decodes an explanation.
pub fn explain_sample(ckpt: &Checkpoint, sample: &Sample, opts: &ExplainOptions<'_>) -> Result<ExplanationRecord> {
    if let Some(fp) = opts.vocab_fingerprint {
        let have = ckpt.vocab.fingerprint();
        if fp != have {
            return Err(Error::FingerprintMismatch {
                what: "vocabulary",
                expected: have,
                found: fp.to_owned(),
            });
        }
    }
    if let Some(fp) = opts.sensor_stats_fingerprint {
        let have = fingerprint(&ckpt.sensor_stats)?;
        if fp != have {
            return Err(Error::FingerprintMismatch {
                what: "sensor stats",
                expected: have,
                found: fp.to_owned(),
            });
        }
    }
    let cfg = &ckpt.model_config;
    let started = Instant::now();
    let prepared = prepare_sample(sample, &ckpt.vocab, &ckpt.sensor_stats, cfg.max_len)?;
    let record = opts.attention_dir.is_some();
    let p = predict(&ckpt.params, cfg, &prepared, record)?;
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut attention_files = Vec::new();
    if let Some(dir) = opts.attention_dir {
        let mut grids = Vec::new();
        if cfg.modalities.video {
            let source = AttentionSource::Video {
                temporal_slots: cfg.video.temporal_slots(),
                grid: cfg.video.grid(),
            };
            grids.extend(export_attention(p.output.video_attention.as_ref(), source)?);
        }
        if cfg.modalities.text {
            grids.extend(export_attention(
                p.output.text_attention.as_ref(),
                AttentionSource::Text,
            )?);
        }
        for path in write_attention_csv(dir, &grids)? {
            attention_files.push(path.file_name().expect("file").to_string_lossy().into_owned());
        }
    }
    let probabilities = ActionLabel::ALL
        .iter()
        .map(|a| (a.name().to_owned(), p.action.probs[a.code()]))
        .collect();
    let (explanation, beams) = match p.explanation {
        Some(b) => (Some(detokenize(b.best.content(EOS), &ckpt.vocab)), b.finished),
        None => (None, Vec::new()),
    };
    Ok(ExplanationRecord {
        id: sample.id.clone(),
        action: p.action.predicted(),
        probabilities,
        explanation,
        beams,
        attention_files,
        latency_ms,
    })
}
