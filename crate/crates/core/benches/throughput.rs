use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fusedrive::encoders::{init_params, ModelConfig};
use fusedrive::model::loss_and_grads;
use fusedrive::parallel::Parallelism;
use fusedrive::pipeline::prepare_splits;
use fusedrive::preprocess::split_dataset;
use fusedrive::synthdata::{generate_samples, ClassDistribution, RenderConfig};

/// Per-sample gradients for one batch, the unit of work the trainer fans out.
fn batch_gradients(c: &mut Criterion) {
    let samples = generate_samples(
        24,
        1,
        &ClassDistribution::default(),
        &RenderConfig::with_size(32),
        Parallelism::Sequential,
    )
    .unwrap();
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let data = prepare_splits(&samples, &split_dataset(&ids, 1).unwrap(), 50).unwrap();
    let batch: Vec<_> = data.train.into_iter().take(8).collect();
    let mut cfg = ModelConfig::toy(data.vocab.len());
    cfg.video.image_size = 32;
    let params = init_params(&cfg, 1).unwrap();

    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for par in [Parallelism::Sequential, Parallelism::Rayon] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{par:?}")), &par, |b, &par| {
            b.iter(|| par.map(&batch, |s| loss_and_grads(&params, &cfg, s).unwrap().loss.total))
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_samples");
    group.sample_size(10);
    for par in [Parallelism::Sequential, Parallelism::Rayon] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{par:?}")), &par, |b, &par| {
            b.iter(|| generate_samples(64, 3, &ClassDistribution::default(), &RenderConfig::default(), par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, generation);
criterion_main!(benches);
