use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use s2s_bench::two_instance_scene;
use s2s_core::model::{InputMode, ModelConfig, TwoStreamModel};
use s2s_core::nn::{Feature, Grads};
use s2s_core::s2s::build_s2s;
use s2s_core::wordvec::semantic_fixture_table;

fn blob(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_s2s");
    for dim in [64, 300] {
        let table = semantic_fixture_table(dim, 0).unwrap();
        let scene = two_instance_scene(256);
        group.bench_with_input(BenchmarkId::new("256_to_64", dim), &dim, |b, _| {
            b.iter(|| build_s2s(black_box(&scene), &table, 64).unwrap())
        });
    }
    group.finish();
}

fn vnet(c: &mut Criterion) {
    let table = semantic_fixture_table(64, 0).unwrap();
    let b = build_s2s(&two_instance_scene(64), &table, 64).unwrap();
    let (h, w, d) = b.shape();
    let chw: Vec<f32> = (0..d * h * w)
        .map(|i| b.data()[(i % (h * w)) * d + i / (h * w)])
        .collect();
    let x = Feature::new(d, h, w, chw);
    let model = TwoStreamModel::<f32>::new(ModelConfig::tiny(InputMode::S2s, 64, 64, 64)).unwrap();
    c.bench_function("forward_vnet/tiny_64", |b| {
        b.iter(|| model.forward_vnet(black_box(&x)).unwrap())
    });
    c.bench_function("vnet_forward_backward/tiny_64", |b| {
        b.iter(|| {
            let (f, trace) = model.vnet_trace(black_box(&x)).unwrap();
            let mut g = Grads::zeros_like(model.params());
            model.vnet_backward(&mut g, &trace, &f, false);
            g
        })
    });
}

criterion_group!(benches, blob, vnet);
criterion_main!(benches);
