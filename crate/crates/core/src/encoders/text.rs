use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::preprocess::{TokenSequence, CLS};
use crate::tensor::Tensor;
use crate::transformer::{stack_backward, stack_forward, AttentionRecord, StackCache, StackSpec};

use super::ModelConfig;

pub struct TextCache {
    ids: Vec<u32>,
    stack: StackCache,
    width: usize,
}

fn spec(cfg: &ModelConfig) -> StackSpec<'static> {
    StackSpec {
        prefix: "text",
        layers: cfg.text.layers,
        heads: cfg.text.heads,
        causal: false,
    }
}

/// Embeds `ids` as `tok_embed[id] + pos_embed[position]`.
pub(crate) fn embed(params: &ParamStore, prefix: &str, ids: &[u32]) -> Tensor {
    let tok = params.get(&format!("{prefix}.tok_embed"));
    let pos = params.get(&format!("{prefix}.pos_embed"));
    let d = tok.cols();
    let mut x = Tensor::zeros(&[ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        for ((o, t), p) in x.row_mut(i).iter_mut().zip(tok.row(id as usize)).zip(pos.row(i)) {
            *o = t + p;
        }
    }
    x
}

pub(crate) fn embed_backward(grads: &mut ParamStore, prefix: &str, ids: &[u32], dx: &Tensor) {
    let tok = grads.get_mut(&format!("{prefix}.tok_embed"));
    for (i, &id) in ids.iter().enumerate() {
        for (g, d) in tok.row_mut(id as usize).iter_mut().zip(dx.row(i)) {
            *g += d;
        }
    }
    let pos = grads.get_mut(&format!("{prefix}.pos_embed"));
    for i in 0..ids.len() {
        for (g, d) in pos.row_mut(i).iter_mut().zip(dx.row(i)) {
            *g += d;
        }
    }
}

/// Bidirectional encoder over the valid tokens; returns the final hidden
/// state at the leading CLS position.
pub fn text_encode(
    tokens: &TokenSequence,
    params: &ParamStore,
    cfg: &ModelConfig,
    record: bool,
) -> Result<(Vec<f64>, TextCache, Option<AttentionRecord>)> {
    let ids = tokens.valid();
    if ids.first() != Some(&CLS) {
        return Err(Error::invalid("text input must start with the CLS token"));
    }
    if ids.len() > cfg.max_len {
        return Err(Error::invalid(format!(
            "text input has {} tokens, limit is {}",
            ids.len(),
            cfg.max_len
        )));
    }
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::invalid(format!("token id {bad} outside vocabulary")));
    }
    let x = embed(params, "text", ids);
    let (y, stack, rec) = stack_forward(params, spec(cfg), x, record);
    let width = y.cols();
    Ok((
        y.row(0).to_vec(),
        TextCache {
            ids: ids.to_vec(),
            stack,
            width,
        },
        rec,
    ))
}

pub fn text_backward(params: &ParamStore, grads: &mut ParamStore, cfg: &ModelConfig, cache: &TextCache, dfeat: &[f64]) {
    let mut dy = Tensor::zeros(&[cache.ids.len(), cache.width]);
    dy.row_mut(0).copy_from_slice(dfeat);
    let dx = stack_backward(params, grads, spec(cfg), &cache.stack, &dy);
    embed_backward(grads, "text", &cache.ids, &dx);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::init_params;

    fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
        let mut padded = ids.to_vec();
        padded.resize(max_len, 0);
        TokenSequence {
            ids: padded,
            len: ids.len(),
        }
    }

    #[test]
    fn pad_region_is_ignored() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 2).unwrap();
        let a = seq(&[CLS, 7, 8, 9], 10);
        let mut b = a.clone();
        b.ids[6] = 11;
        b.ids[9] = 5;
        let fa = text_encode(&a, &params, &cfg, false).unwrap().0;
        let fb = text_encode(&b, &params, &cfg, false).unwrap().0;
        assert_eq!(fa, fb);
        assert_eq!(fa.len(), cfg.d_text);
    }

    #[test]
    fn cls_only_attention_sums_to_one() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 2).unwrap();
        let (f, _, rec) = text_encode(&seq(&[CLS], 5), &params, &cfg, true).unwrap();
        assert_eq!(f.len(), cfg.d_text);
        for layer in rec.unwrap() {
            assert!((layer.data()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_cls_rejected() {
        let cfg = ModelConfig::tiny(12);
        let params = init_params(&cfg, 2).unwrap();
        assert!(text_encode(&seq(&[7, 8], 5), &params, &cfg, false).is_err());
    }
}
