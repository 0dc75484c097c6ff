//! Whole-model forward pass, joint loss and gradients for one sample.

use serde::{Deserialize, Serialize};

use crate::encoders::{
    sensor_backward, sensor_encode, text_backward, text_encode, video_backward, video_encode, ModelConfig, SensorCache,
    TextCache, VideoCache,
};
use crate::error::Result;
use crate::fusion::{
    action_head_backward, action_loss, action_loss_grad, beam_search, decode_teacher_forced, decoder_backward,
    explanation_loss, explanation_loss_grad, fuse, fuse_backward, predict_action, total_loss, ActionDistribution,
    BeamOutput, FusedFeature,
};
use crate::params::ParamStore;
use crate::preprocess::{apply_sensor_norm, normalize_clip, tokenize, Framing, SensorStats, TokenSequence, Vocabulary};
use crate::synthdata::{ActionLabel, Sample, VideoClip};
use crate::transformer::AttentionRecord;

/// A sample after preprocessing. The clip stays 8-bit and is normalised on
/// the fly to keep memory proportional to the raw dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub clip: VideoClip,
    pub sensor: [f64; 3],
    pub text: TokenSequence,
    pub target: TokenSequence,
    pub label: ActionLabel,
    pub explanation: String,
}

pub fn prepare_sample(
    sample: &Sample,
    vocab: &Vocabulary,
    stats: &SensorStats,
    max_len: usize,
) -> Result<PreparedSample> {
    Ok(PreparedSample {
        id: sample.id.clone(),
        clip: sample.clip.clone(),
        sensor: apply_sensor_norm(&sample.sensor, stats)?,
        text: tokenize(&sample.description, vocab, max_len, Framing::Cls),
        target: tokenize(&sample.explanation, vocab, max_len, Framing::BosEos),
        label: sample.action,
        explanation: sample.explanation.clone(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub action: f64,
    pub explanation: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.action.is_finite() && self.explanation.is_finite() && self.total.is_finite()
    }
}

pub struct ModelOutput {
    pub fused: FusedFeature,
    pub action: ActionDistribution,
    pub video_attention: Option<AttentionRecord>,
    pub text_attention: Option<AttentionRecord>,
}

struct Caches {
    video: Option<VideoCache>,
    sensor: Option<SensorCache>,
    text: Option<TextCache>,
    fuse: crate::fusion::FuseCache,
}

fn encode(
    params: &ParamStore,
    cfg: &ModelConfig,
    sample: &PreparedSample,
    record: bool,
) -> Result<(ModelOutput, Caches)> {
    let m = cfg.modalities;
    let (video, video_attention) = if m.video {
        let clip = normalize_clip(&sample.clip, cfg.video.image_size)?;
        let (f, c, r) = video_encode(&clip, params, cfg, record)?;
        (Some((f, c)), r)
    } else {
        (None, None)
    };
    let sensor = m.sensor.then(|| sensor_encode(&sample.sensor, params));
    let (text, text_attention) = if m.text {
        let (f, c, r) = text_encode(&sample.text, params, cfg, record)?;
        (Some((f, c)), r)
    } else {
        (None, None)
    };
    let (fused, fuse_cache) = fuse(
        video.as_ref().map(|v| v.0.as_slice()),
        sensor.as_ref().map(|v| v.0.as_slice()),
        text.as_ref().map(|v| v.0.as_slice()),
        params,
        cfg,
    )?;
    let action = predict_action(&fused, params);
    Ok((
        ModelOutput {
            fused,
            action,
            video_attention,
            text_attention,
        },
        Caches {
            video: video.map(|v| v.1),
            sensor: sensor.map(|v| v.1),
            text: text.map(|v| v.1),
            fuse: fuse_cache,
        },
    ))
}

/// Encoders, fusion and the action head.
pub fn forward(params: &ParamStore, cfg: &ModelConfig, sample: &PreparedSample, record: bool) -> Result<ModelOutput> {
    encode(params, cfg, sample, record).map(|(out, _)| out)
}

/// Joint loss; the explanation term is zero when the decoder head is disabled.
pub fn loss(params: &ParamStore, cfg: &ModelConfig, sample: &PreparedSample) -> Result<LossBreakdown> {
    let out = forward(params, cfg, sample, false)?;
    let action = action_loss(&out.action, sample.label);
    let explanation = if cfg.explanation_head {
        let (logits, _) = decode_teacher_forced(&out.fused, &sample.target, params, cfg)?;
        explanation_loss(&logits, &sample.target)
    } else {
        0.0
    };
    Ok(LossBreakdown {
        action,
        explanation,
        total: total_loss(action, explanation),
    })
}

/// Loss, predicted action and parameter gradients for one sample.
pub struct Backprop {
    pub loss: LossBreakdown,
    pub predicted: ActionLabel,
    pub grads: ParamStore,
}

/// Joint loss and its gradient with respect to every parameter array.
pub fn loss_and_grads(params: &ParamStore, cfg: &ModelConfig, sample: &PreparedSample) -> Result<Backprop> {
    let (out, caches) = encode(params, cfg, sample, false)?;
    let mut grads = params.zeros_like();
    let action = action_loss(&out.action, sample.label);
    let dlogits = action_loss_grad(&out.action, sample.label);
    let mut df = action_head_backward(params, &mut grads, &out.fused, &dlogits);
    let explanation = if cfg.explanation_head {
        let (logits, dcache) = decode_teacher_forced(&out.fused, &sample.target, params, cfg)?;
        let dl = explanation_loss_grad(&logits, &sample.target);
        let d = decoder_backward(params, &mut grads, cfg, &dcache, &dl);
        for (a, b) in df.iter_mut().zip(&d) {
            *a += b;
        }
        explanation_loss(&logits, &sample.target)
    } else {
        0.0
    };
    let dm = fuse_backward(params, &mut grads, cfg, &caches.fuse, &df);
    if let Some(c) = &caches.video {
        video_backward(params, &mut grads, cfg, c, &dm.video);
    }
    if let Some(c) = &caches.sensor {
        sensor_backward(params, &mut grads, c, &dm.sensor);
    }
    if let Some(c) = &caches.text {
        text_backward(params, &mut grads, cfg, c, &dm.text);
    }
    Ok(Backprop {
        loss: LossBreakdown {
            action,
            explanation,
            total: total_loss(action, explanation),
        },
        predicted: out.action.predicted(),
        grads,
    })
}

/// Action prediction plus, when the decoder is enabled, a beam-searched
/// explanation.
pub struct Prediction {
    pub action: ActionDistribution,
    pub explanation: Option<BeamOutput>,
    pub output: ModelOutput,
}

pub fn predict(params: &ParamStore, cfg: &ModelConfig, sample: &PreparedSample, record: bool) -> Result<Prediction> {
    let output = forward(params, cfg, sample, record)?;
    let explanation = if cfg.explanation_head {
        Some(beam_search(&output.fused, params, cfg, cfg.beams)?)
    } else {
        None
    };
    Ok(Prediction {
        action: output.action.clone(),
        explanation,
        output,
    })
}
