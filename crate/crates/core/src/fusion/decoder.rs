use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{linear, linear_backward, log_softmax, softmax};
use crate::params::ParamStore;
use crate::preprocess::{TokenSequence, BOS};
use crate::tensor::Tensor;
use crate::transformer::{stack_backward, stack_forward, StackCache, StackSpec};

use super::beam::StepScorer;
use super::FusedFeature;

fn spec(cfg: &ModelConfig) -> StackSpec<'static> {
    StackSpec {
        prefix: "decoder",
        layers: cfg.decoder.layers,
        heads: cfg.decoder.heads,
        causal: true,
    }
}

/// Projection of the fused feature into the decoder width.
pub fn conditioning(f: &FusedFeature, params: &ParamStore) -> Vec<f64> {
    let x = Tensor::row_vector(f.values.clone());
    linear(
        &x,
        params.get("decoder.cond.weight"),
        Some(params.get("decoder.cond.bias")),
    )
    .into_vec()
}

fn forward(params: &ParamStore, cfg: &ModelConfig, cond: &[f64], ids: &[u32]) -> (Tensor, Tensor, StackCache) {
    let mut x = crate::encoders::text::embed(params, "decoder", ids);
    x.add_row_broadcast(cond);
    let (y, stack, _) = stack_forward(params, spec(cfg), x, false);
    let logits = linear(&y, params.get("decoder.out.weight"), None);
    (logits, y, stack)
}

pub struct DecoderCache {
    inputs: Vec<u32>,
    f: Tensor,
    y: Tensor,
    stack: StackCache,
}

/// Runs the decoder on `target[..len-1]`; row `i` of the returned logits
/// predicts `target[i + 1]`.
pub fn decode_teacher_forced(
    f: &FusedFeature,
    target: &TokenSequence,
    params: &ParamStore,
    cfg: &ModelConfig,
) -> Result<(Tensor, DecoderCache)> {
    let ids = target.valid();
    if ids.len() > cfg.max_len {
        return Err(Error::invalid(format!(
            "target has {} tokens, limit is {}",
            ids.len(),
            cfg.max_len
        )));
    }
    if ids.len() < 2 || ids[0] != BOS {
        return Err(Error::invalid("target must be framed as BOS … EOS"));
    }
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::invalid(format!("token id {bad} outside vocabulary")));
    }
    let inputs = ids[..ids.len() - 1].to_vec();
    let cond = conditioning(f, params);
    let (logits, y, stack) = forward(params, cfg, &cond, &inputs);
    let cache = DecoderCache {
        inputs,
        f: Tensor::row_vector(f.values.clone()),
        y,
        stack,
    };
    Ok((logits, cache))
}

/// Mean cross-entropy over every non-PAD target position after BOS.
pub fn explanation_loss(logits: &Tensor, target: &TokenSequence) -> f64 {
    let ids = &target.valid()[1..];
    let mut sum = 0.0;
    for (i, &id) in ids.iter().enumerate() {
        sum -= log_softmax(logits.row(i))[id as usize];
    }
    sum / ids.len() as f64
}

pub fn explanation_loss_grad(logits: &Tensor, target: &TokenSequence) -> Tensor {
    let ids = &target.valid()[1..];
    let n = ids.len() as f64;
    let mut g = Tensor::zeros(logits.shape());
    for (i, &id) in ids.iter().enumerate() {
        let row = g.row_mut(i);
        row.copy_from_slice(&softmax(logits.row(i)));
        row[id as usize] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    g
}

/// Accumulates decoder gradients and returns the gradient on the fused feature.
pub fn decoder_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    cfg: &ModelConfig,
    cache: &DecoderCache,
    dlogits: &Tensor,
) -> Vec<f64> {
    let dy = linear_backward(
        &cache.y,
        params.get("decoder.out.weight"),
        dlogits,
        grads.get_mut("decoder.out.weight"),
        None,
        true,
    )
    .expect("dx requested");
    let dx = stack_backward(params, grads, spec(cfg), &cache.stack, &dy);
    crate::encoders::text::embed_backward(grads, "decoder", &cache.inputs, &dx);
    let mut dcond = vec![0.0; dx.cols()];
    dx.add_col_sums_into(&mut dcond);
    let dcond = Tensor::row_vector(dcond);
    let mut db = std::mem::replace(grads.get_mut("decoder.cond.bias"), Tensor::zeros(&[0]));
    let df = linear_backward(
        &cache.f,
        params.get("decoder.cond.weight"),
        &dcond,
        grads.get_mut("decoder.cond.weight"),
        Some(&mut db),
        true,
    )
    .expect("dx requested");
    *grads.get_mut("decoder.cond.bias") = db;
    df.into_vec()
}

/// Next-token scorer backed by the trained decoder.
pub struct DecoderScorer<'a> {
    params: &'a ParamStore,
    cfg: &'a ModelConfig,
    cond: Vec<f64>,
}

impl<'a> DecoderScorer<'a> {
    pub fn new(f: &FusedFeature, params: &'a ParamStore, cfg: &'a ModelConfig) -> Self {
        Self {
            params,
            cfg,
            cond: conditioning(f, params),
        }
    }

    /// Scorer with an explicit conditioning vector.
    pub fn with_conditioning(cond: Vec<f64>, params: &'a ParamStore, cfg: &'a ModelConfig) -> Self {
        Self { params, cfg, cond }
    }
}

impl StepScorer for DecoderScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn log_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let (logits, _, _) = forward(self.params, self.cfg, &self.cond, prefix);
        log_softmax(logits.row(logits.rows() - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_params, ModalityMask};
    use crate::preprocess::EOS;

    fn target(ids: &[u32]) -> TokenSequence {
        let mut padded = ids.to_vec();
        padded.resize(12, 0);
        TokenSequence {
            ids: padded,
            len: ids.len(),
        }
    }

    fn feature(cfg: &ModelConfig, scale: f64) -> FusedFeature {
        FusedFeature {
            values: (0..cfg.head_width())
                .map(|i| ((i * 13 % 7) as f64 - 3.0) * scale)
                .collect(),
            provenance: ModalityMask::ALL,
        }
    }

    #[test]
    fn zero_projection_removes_dependence_on_f() {
        let cfg = ModelConfig::tiny(12);
        let mut params = init_params(&cfg, 8).unwrap();
        params.get_mut("decoder.cond.weight").scale(0.0);
        let t = target(&[BOS, 6, 7, 8, EOS]);
        let (a, _) = decode_teacher_forced(&feature(&cfg, 0.3), &t, &params, &cfg).unwrap();
        let (b, _) = decode_teacher_forced(&feature(&cfg, -1.1), &t, &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn causal_prefix_logits_unchanged() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 8).unwrap();
        let f = feature(&cfg, 0.5);
        let (a, _) = decode_teacher_forced(&f, &target(&[BOS, 6, 7, 8, 9, EOS]), &params, &cfg).unwrap();
        let (b, _) = decode_teacher_forced(&f, &target(&[BOS, 6, 7, 11, 9, EOS]), &params, &cfg).unwrap();
        // token at position 3 changed: logits rows 0..=2 only see positions ≤ 2
        for r in 0..3 {
            assert_eq!(a.row(r), b.row(r));
        }
        assert_ne!(a.row(3), b.row(3));
    }

    #[test]
    fn loss_matches_manual_mean() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 1).unwrap();
        let t = target(&[BOS, 5, 9, EOS]);
        let (logits, _) = decode_teacher_forced(&feature(&cfg, 0.2), &t, &params, &cfg).unwrap();
        assert_eq!(logits.shape(), &[3, 12]);
        let mut want = 0.0;
        for (i, id) in [5usize, 9, EOS as usize].iter().enumerate() {
            let row = logits.row(i);
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            want += lse - row[*id];
        }
        assert!((explanation_loss(&logits, &t) - want / 3.0).abs() < 1e-12);
    }

    #[test]
    fn framing_enforced() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 1).unwrap();
        let f = feature(&cfg, 0.2);
        assert!(decode_teacher_forced(&f, &target(&[5, 6, EOS]), &params, &cfg).is_err());
        assert!(decode_teacher_forced(&f, &target(&[BOS]), &params, &cfg).is_err());
        let mut long = cfg.clone();
        long.max_len = 3;
        assert!(decode_teacher_forced(&f, &target(&[BOS, 5, 6, EOS]), &params, &long).is_err());
    }
}
