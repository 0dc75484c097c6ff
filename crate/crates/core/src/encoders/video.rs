use crate::error::{Error, Result};
use crate::nn::{linear, linear_backward};
use crate::params::ParamStore;
use crate::preprocess::NormalizedClip;
use crate::tensor::Tensor;
use crate::transformer::{stack_backward, stack_forward, AttentionRecord, StackCache, StackSpec};

use super::ModelConfig;

pub struct VideoCache {
    patches: Tensor,
    stack: StackCache,
}

fn spec(cfg: &ModelConfig) -> StackSpec<'static> {
    StackSpec {
        prefix: "video",
        layers: cfg.video.layers,
        heads: cfg.video.heads,
        causal: false,
    }
}

/// Cuts the clip into tubelets. Tokens are ordered (time slot, row, column);
/// each token's features are ordered (frame offset, y, x, channel).
pub fn patchify(clip: &NormalizedClip, cfg: &ModelConfig) -> Result<Tensor> {
    let v = &cfg.video;
    let size = v.image_size;
    if clip.size != size || clip.data.len() != v.frames * size * size * 3 {
        return Err(Error::invalid(format!(
            "clip is {}×{} with {} frames, model expects {size}×{size} with {}",
            clip.size,
            clip.size,
            clip.frames(),
            v.frames
        )));
    }
    let (p, tf, g) = (v.patch, v.tubelet_frames, v.grid());
    let dim = v.patch_dim();
    let mut out = Vec::with_capacity(v.tokens() * dim);
    for t in 0..v.temporal_slots() {
        for gy in 0..g {
            for gx in 0..g {
                for dt in 0..tf {
                    let f = t * tf + dt;
                    for dy in 0..p {
                        let y = gy * p + dy;
                        let start = ((f * size + y) * size + gx * p) * 3;
                        out.extend_from_slice(&clip.data[start..start + p * 3]);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[v.tokens(), dim], out)
}

/// Tubelet embedding, learned positions, the encoder stack and a mean over
/// every token.
pub fn video_encode(
    clip: &NormalizedClip,
    params: &ParamStore,
    cfg: &ModelConfig,
    record: bool,
) -> Result<(Vec<f64>, VideoCache, Option<AttentionRecord>)> {
    let patches = patchify(clip, cfg)?;
    let mut x = linear(
        &patches,
        params.get("video.patch.weight"),
        Some(params.get("video.patch.bias")),
    );
    x.add_assign(params.get("video.pos_embed"));
    let (y, stack, rec) = stack_forward(params, spec(cfg), x, record);
    let mut feat = vec![0.0; y.cols()];
    y.add_col_sums_into(&mut feat);
    let n = y.rows() as f64;
    for f in &mut feat {
        *f /= n;
    }
    Ok((feat, VideoCache { patches, stack }, rec))
}

pub fn video_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    cfg: &ModelConfig,
    cache: &VideoCache,
    dfeat: &[f64],
) {
    let n = cache.patches.rows();
    let scaled: Vec<f64> = dfeat.iter().map(|g| g / n as f64).collect();
    let dy = Tensor::from_vec(&[n, dfeat.len()], scaled.repeat(n)).expect("shape");
    let dx = stack_backward(params, grads, spec(cfg), &cache.stack, &dy);
    grads.get_mut("video.pos_embed").add_assign(&dx);
    let mut dw = std::mem::replace(grads.get_mut("video.patch.weight"), Tensor::zeros(&[0]));
    linear_backward(
        &cache.patches,
        params.get("video.patch.weight"),
        &dx,
        &mut dw,
        Some(grads.get_mut("video.patch.bias")),
        false,
    );
    *grads.get_mut("video.patch.weight") = dw;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::init_params;

    fn clip(cfg: &ModelConfig, seed: u64) -> NormalizedClip {
        let s = cfg.video.image_size;
        let data = (0..cfg.video.frames * s * s * 3)
            .map(|i| ((i as u64 * 2654435761 + seed) % 255) as f64 / 255.0)
            .collect();
        NormalizedClip { size: s, data }
    }

    #[test]
    fn patch_layout_matches_pixel_addresses() {
        let cfg = ModelConfig::tiny(10);
        let c = clip(&cfg, 0);
        let p = patchify(&c, &cfg).unwrap();
        let v = &cfg.video;
        let s = v.image_size;
        // token (t=1, gy=1, gx=0), feature (dt=1, dy=2, dx=3, c=2)
        let token = (v.grid() + 1) * v.grid();
        let feat = ((v.patch + 2) * v.patch + 3) * 3 + 2;
        let (f, y, x) = (3, v.patch + 2, 3);
        assert_eq!(p.row(token)[feat], c.data[((f * s + y) * s + x) * 3 + 2]);
    }

    #[test]
    fn one_pixel_changes_output() {
        let cfg = ModelConfig::tiny(10);
        let params = init_params(&cfg, 1).unwrap();
        let a = clip(&cfg, 3);
        let mut b = a.clone();
        b.data[100] = 1.0 - b.data[100];
        let fa = video_encode(&a, &params, &cfg, false).unwrap().0;
        let fb = video_encode(&b, &params, &cfg, false).unwrap().0;
        assert_eq!(fa.len(), cfg.d_video);
        assert_ne!(fa, fb);
    }

    #[test]
    fn wrong_size_rejected() {
        let cfg = ModelConfig::tiny(10);
        let params = init_params(&cfg, 1).unwrap();
        let c = NormalizedClip {
            size: 8,
            data: vec![0.0; 16 * 8 * 8 * 3],
        };
        assert!(video_encode(&c, &params, &cfg, false).is_err());
    }
}
