//! Model configuration, parameter initialisation and the three modality
//! encoders (video, sensor, text).

mod attention;
mod config;
mod sensor;
pub(crate) mod text;
mod video;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::transformer::{stack_param_specs, InitKind, ParamSpec};

pub use attention::{export_attention, write_attention_csv, AttentionGrid, AttentionSource};
pub use config::{FusionMode, ModalityMask, ModelConfig, StackConfig, VideoEncoderConfig};
pub use sensor::{sensor_backward, sensor_encode, SensorCache};
pub use text::{text_backward, text_encode, TextCache};
pub use video::{patchify, video_backward, video_encode, VideoCache};

/// Every learnable array of the model, in sorted name order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    use InitKind::*;
    let mut specs = Vec::new();
    let v = &cfg.video;
    specs.push(ParamSpec::new(
        "video.patch.weight",
        &[v.patch_dim(), cfg.d_video],
        Xavier,
    ));
    specs.push(ParamSpec::new("video.patch.bias", &[cfg.d_video], Zeros));
    specs.push(ParamSpec::new(
        "video.pos_embed",
        &[v.tokens(), cfg.d_video],
        Positional,
    ));
    specs.extend(stack_param_specs("video", v.layers, cfg.d_video, v.mlp_ratio));

    specs.push(ParamSpec::new("sensor.fc1.weight", &[3, cfg.d_sensor_hidden], Xavier));
    specs.push(ParamSpec::new("sensor.fc1.bias", &[cfg.d_sensor_hidden], Zeros));
    specs.push(ParamSpec::new(
        "sensor.fc2.weight",
        &[cfg.d_sensor_hidden, cfg.d_sensor],
        Xavier,
    ));
    specs.push(ParamSpec::new("sensor.fc2.bias", &[cfg.d_sensor], Zeros));

    specs.push(ParamSpec::new("text.tok_embed", &[cfg.vocab_size, cfg.d_text], Xavier));
    specs.push(ParamSpec::new("text.pos_embed", &[cfg.max_len, cfg.d_text], Positional));
    specs.extend(stack_param_specs(
        "text",
        cfg.text.layers,
        cfg.d_text,
        cfg.text.mlp_ratio,
    ));

    if cfg.fusion_mode == FusionMode::Full {
        specs.push(ParamSpec::new(
            "fusion.weight",
            &[cfg.concat_width(), cfg.d_fused],
            Xavier,
        ));
        specs.push(ParamSpec::new("fusion.bias", &[cfg.d_fused], Zeros));
    }
    specs.push(ParamSpec::new(
        "action_head.weight",
        &[cfg.head_width(), cfg.num_actions],
        Xavier,
    ));
    specs.push(ParamSpec::new("action_head.bias", &[cfg.num_actions], Zeros));

    specs.push(ParamSpec::new(
        "decoder.tok_embed",
        &[cfg.vocab_size, cfg.d_dec],
        Xavier,
    ));
    specs.push(ParamSpec::new(
        "decoder.pos_embed",
        &[cfg.max_len, cfg.d_dec],
        Positional,
    ));
    specs.push(ParamSpec::new(
        "decoder.cond.weight",
        &[cfg.head_width(), cfg.d_dec],
        Xavier,
    ));
    specs.push(ParamSpec::new("decoder.cond.bias", &[cfg.d_dec], Zeros));
    specs.extend(stack_param_specs(
        "decoder",
        cfg.decoder.layers,
        cfg.d_dec,
        cfg.decoder.mlp_ratio,
    ));
    specs.push(ParamSpec::new(
        "decoder.out.weight",
        &[cfg.d_dec, cfg.vocab_size],
        Xavier,
    ));

    specs.sort_by(|a, b| a.name.cmp(&b.name));
    specs
}

/// Whether decoupled weight decay applies to the array: projection weights
/// only, never biases, norms or embedding tables.
pub fn is_decayed(name: &str) -> bool {
    name.ends_with(".weight")
}

/// Seeded initialisation: Xavier-uniform weights, zero biases, unit norm
/// gains and N(0, 0.02) positional tables.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.02).expect("valid normal");
    let mut store = ParamStore::new();
    for spec in param_specs(cfg) {
        let len: usize = spec.shape.iter().product();
        let data: Vec<f64> = match spec.init {
            InitKind::Zeros => vec![0.0; len],
            InitKind::Ones => vec![1.0; len],
            InitKind::Positional => (0..len).map(|_| normal.sample(&mut rng)).collect(),
            InitKind::Xavier => {
                let a = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-a..a)).collect()
            }
        };
        store.insert(spec.name, Tensor::from_vec(&spec.shape, data)?);
    }
    Ok(store)
}

/// Checks that `params` holds exactly the arrays `cfg` requires.
pub fn check_params(cfg: &ModelConfig, params: &ParamStore) -> Result<()> {
    let specs = param_specs(cfg);
    if specs.len() != params.len() {
        return Err(crate::error::Error::config(format!(
            "expected {} parameter arrays, found {}",
            specs.len(),
            params.len()
        )));
    }
    for spec in specs {
        match params.try_get(&spec.name) {
            Some(t) if t.shape() == spec.shape.as_slice() => {}
            Some(t) => {
                return Err(crate::error::Error::CheckpointShape {
                    name: spec.name,
                    expected: spec.shape,
                    found: t.shape().to_vec(),
                })
            }
            None => {
                return Err(crate::error::Error::config(format!(
                    "missing parameter array `{}`",
                    spec.name
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::tiny(20);
        assert_eq!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 5).unwrap());
        assert_ne!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 6).unwrap());
    }

    #[test]
    fn sensor_shapes_and_zero_biases() {
        let cfg = ModelConfig::tiny(20);
        let p = init_params(&cfg, 1).unwrap();
        assert_eq!(p.get("sensor.fc1.weight").shape(), &[3, 64]);
        assert_eq!(p.get("sensor.fc2.weight").shape(), &[64, 128]);
        for (name, t) in p.iter() {
            if name.ends_with(".bias") || name.ends_with(".beta") {
                assert!(t.data().iter().all(|v| *v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn xavier_bound_respected() {
        let cfg = ModelConfig::tiny(20);
        let p = init_params(&cfg, 2).unwrap();
        let w = p.get("fusion.weight");
        let a = (6.0 / (w.shape()[0] + w.shape()[1]) as f64).sqrt();
        assert!(w.data().iter().all(|v| v.abs() < a));
    }

    #[test]
    fn names_are_sorted_and_stable() {
        let cfg = ModelConfig::tiny(20);
        let names: Vec<String> = param_specs(&cfg).into_iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        let p = init_params(&cfg, 0).unwrap();
        assert_eq!(p.names().collect::<Vec<_>>(), names);
    }

    #[test]
    fn head_divisibility_violation_rejected() {
        let mut cfg = ModelConfig::tiny(20);
        cfg.text.heads = 3;
        assert!(init_params(&cfg, 0).is_err());
    }

    #[test]
    fn simple_concat_has_no_fusion_projection() {
        let mut cfg = ModelConfig::tiny(20);
        cfg.fusion_mode = FusionMode::SimpleConcat;
        let p = init_params(&cfg, 0).unwrap();
        assert!(!p.contains("fusion.weight"));
        assert_eq!(p.get("action_head.weight").shape()[0], cfg.concat_width());
    }
}
