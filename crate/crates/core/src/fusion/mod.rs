//! Fusion layer, action head, conditioned explanation decoder and the losses.

mod beam;
mod decoder;

use serde::{Deserialize, Serialize};

use crate::encoders::{FusionMode, ModalityMask, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{linear, linear_backward, log_softmax, relu_backward, relu_in_place, softmax};
use crate::params::ParamStore;
use crate::synthdata::ActionLabel;
use crate::tensor::Tensor;

pub use beam::{
    beam_search, beam_search_with, exhaustive_search, greedy_decode, BeamConfig, BeamHypothesis, BeamOutput, StepScorer,
};
pub use decoder::{
    conditioning, decode_teacher_forced, decoder_backward, explanation_loss, explanation_loss_grad, DecoderCache,
    DecoderScorer,
};

/// The vector consumed by both heads, with a record of which modalities fed it.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeature {
    pub values: Vec<f64>,
    pub provenance: ModalityMask,
}

pub struct FuseCache {
    concat: Tensor,
    out: Tensor,
    mode: FusionMode,
}

/// Gradients flowing back into each modality feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityGrads {
    pub video: Vec<f64>,
    pub sensor: Vec<f64>,
    pub text: Vec<f64>,
}

fn check_len(name: &str, v: Option<&[f64]>, want: usize) -> Result<()> {
    match v {
        Some(v) if v.len() != want => Err(Error::invalid(format!(
            "{name} feature has length {}, expected {want}",
            v.len()
        ))),
        _ => Ok(()),
    }
}

/// Concatenates (video, sensor, text) with absent slots zero-filled, then
/// applies `ReLU(c·W + b)` in full mode or passes `c` through unchanged.
pub fn fuse(
    video: Option<&[f64]>,
    sensor: Option<&[f64]>,
    text: Option<&[f64]>,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> Result<(FusedFeature, FuseCache)> {
    if video.is_none() && sensor.is_none() && text.is_none() {
        return Err(Error::invalid("fusion needs at least one modality"));
    }
    check_len("video", video, cfg.d_video)?;
    check_len("sensor", sensor, cfg.d_sensor)?;
    check_len("text", text, cfg.d_text)?;
    let mut c = Vec::with_capacity(cfg.concat_width());
    for (v, d) in [(video, cfg.d_video), (sensor, cfg.d_sensor), (text, cfg.d_text)] {
        match v {
            Some(v) => c.extend_from_slice(v),
            None => c.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    let concat = Tensor::row_vector(c);
    let out = match cfg.fusion_mode {
        FusionMode::Full => {
            let mut y = linear(&concat, params.get("fusion.weight"), Some(params.get("fusion.bias")));
            relu_in_place(&mut y);
            y
        }
        FusionMode::SimpleConcat => concat.clone(),
    };
    let provenance = ModalityMask {
        video: video.is_some(),
        sensor: sensor.is_some(),
        text: text.is_some(),
    };
    let feature = FusedFeature {
        values: out.data().to_vec(),
        provenance,
    };
    Ok((
        feature,
        FuseCache {
            concat,
            out,
            mode: cfg.fusion_mode,
        },
    ))
}

pub fn fuse_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    cfg: &ModelConfig,
    cache: &FuseCache,
    df: &[f64],
) -> ModalityGrads {
    let df = Tensor::row_vector(df.to_vec());
    let dc = match cache.mode {
        FusionMode::Full => {
            let dz = relu_backward(&cache.out, &df);
            let mut db = std::mem::replace(grads.get_mut("fusion.bias"), Tensor::zeros(&[0]));
            let dc = linear_backward(
                &cache.concat,
                params.get("fusion.weight"),
                &dz,
                grads.get_mut("fusion.weight"),
                Some(&mut db),
                true,
            )
            .expect("dx requested");
            *grads.get_mut("fusion.bias") = db;
            dc
        }
        FusionMode::SimpleConcat => df,
    };
    let dc = dc.data();
    let (a, b) = (cfg.d_video, cfg.d_video + cfg.d_sensor);
    ModalityGrads {
        video: dc[..a].to_vec(),
        sensor: dc[a..b].to_vec(),
        text: dc[b..].to_vec(),
    }
}

/// Softmax output of the action head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = softmax(&logits);
        Self { logits, probs }
    }

    /// Most probable action; ties go to the lowest code.
    pub fn predicted(&self) -> ActionLabel {
        ActionLabel::from_code(crate::nn::argmax(&self.probs)).expect("five classes")
    }
}

pub fn predict_action(f: &FusedFeature, params: &ParamStore) -> ActionDistribution {
    let x = Tensor::row_vector(f.values.clone());
    let logits = linear(
        &x,
        params.get("action_head.weight"),
        Some(params.get("action_head.bias")),
    );
    ActionDistribution::from_logits(logits.into_vec())
}

/// Accumulates head gradients for `dlogits` and returns the gradient on `f`.
pub fn action_head_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    f: &FusedFeature,
    dlogits: &[f64],
) -> Vec<f64> {
    let x = Tensor::row_vector(f.values.clone());
    let dy = Tensor::row_vector(dlogits.to_vec());
    let mut db = std::mem::replace(grads.get_mut("action_head.bias"), Tensor::zeros(&[0]));
    let dx = linear_backward(
        &x,
        params.get("action_head.weight"),
        &dy,
        grads.get_mut("action_head.weight"),
        Some(&mut db),
        true,
    )
    .expect("dx requested");
    *grads.get_mut("action_head.bias") = db;
    dx.into_vec()
}

/// `−log p(label)`, computed from the logits for stability.
pub fn action_loss(dist: &ActionDistribution, label: ActionLabel) -> f64 {
    -log_softmax(&dist.logits)[label.code()]
}

/// d action_loss / d logits = p − onehot(label).
pub fn action_loss_grad(dist: &ActionDistribution, label: ActionLabel) -> Vec<f64> {
    let mut g = dist.probs.clone();
    g[label.code()] -= 1.0;
    g
}

/// The training objective: the unweighted sum of both terms.
pub fn total_loss(action: f64, explanation: f64) -> f64 {
    action + explanation
}
