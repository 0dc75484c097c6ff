use fusedrive::encoders::{init_params, FusionMode, ModelConfig};
use fusedrive::model::PreparedSample;
use fusedrive::parallel::Parallelism;
use fusedrive::pipeline::prepare_splits;
use fusedrive::preprocess::split_dataset;
use fusedrive::synthdata::{generate_samples, ClassDistribution, RenderConfig};
use fusedrive::training::{grad_check, GradCheckConfig};

fn probe(size: usize) -> (Vec<PreparedSample>, usize) {
    let samples = generate_samples(
        12,
        21,
        &ClassDistribution::default(),
        &RenderConfig::with_size(size),
        Parallelism::Sequential,
    )
    .unwrap();
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let split = split_dataset(&ids, 1).unwrap();
    let p = prepare_splits(&samples, &split, 50).unwrap();
    (p.train.into_iter().take(2).collect(), p.vocab.len())
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    let (probe, v) = probe(16);
    let cfg = ModelConfig::tiny(v);
    let params = init_params(&cfg, 5).unwrap();
    let r = grad_check(&params, &cfg, &probe, |_| true, &GradCheckConfig::default()).unwrap();
    for a in &r.arrays {
        println!("{:40} {:.3e} {:.3e}", a.name, a.max_relative_error, a.max_abs_error);
    }
    assert!(r.passes(1e-4), "worst {} {:.3e}", r.worst_array, r.max_relative_error);
}

#[test]
fn simple_concat_gradients_match_finite_differences() {
    let (probe, v) = probe(16);
    let mut cfg = ModelConfig::tiny(v);
    cfg.fusion_mode = FusionMode::SimpleConcat;
    let params = init_params(&cfg, 6).unwrap();
    let r = grad_check(&params, &cfg, &probe, |_| true, &GradCheckConfig::default()).unwrap();
    assert!(r.passes(1e-4), "worst {} {:.3e}", r.worst_array, r.max_relative_error);
}

#[test]
fn sensor_path_is_tight() {
    let (probe, v) = probe(16);
    let cfg = ModelConfig::tiny(v);
    let params = init_params(&cfg, 7).unwrap();
    let r = grad_check(
        &params,
        &cfg,
        &probe,
        |n| n.starts_with("sensor."),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert_eq!(r.arrays.len(), 4);
    assert!(r.passes(1e-6), "worst {} {:.3e}", r.worst_array, r.max_relative_error);
}
