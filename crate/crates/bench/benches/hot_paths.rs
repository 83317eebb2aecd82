use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geofair_core::geo::{build_tree, GeoSample};
use geofair_core::synth::{generate_corpus, CorpusConfig};
use geofair_core::tensor::log_softmax;
use geofair_core::transducer::rnnt_loss;
use geofair_core::{FreezeMask, ModelConfig, RnntModel, Tensor};

fn lattice(t: usize, u: usize, v: usize) -> Tensor {
    let data = (0..t * (u + 1) * v).map(|i| ((i * 7919) % 113) as f64 / 17.0).collect();
    log_softmax(&Tensor::new(vec![t, u + 1, v], data).unwrap()).unwrap()
}

fn transducer(c: &mut Criterion) {
    let lat = lattice(15, 5, 13);
    let labels = [3, 7, 1, 9, 4];
    c.bench_function("rnnt_loss T=15 U=5 V=13", |b| {
        b.iter(|| rnnt_loss(black_box(&lat), black_box(&labels), 0).unwrap())
    });
    let big = lattice(200, 40, 29);
    let labels: Vec<usize> = (0..40).map(|i| 1 + i % 28).collect();
    c.bench_function("rnnt_loss T=200 U=40 V=29", |b| {
        b.iter(|| rnnt_loss(black_box(&big), black_box(&labels), 0).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let corpus = generate_corpus(&CorpusConfig {
        devices_per_region: 1,
        utterances_per_device: 1,
        ..CorpusConfig::desk(0)
    })
    .unwrap();
    let u = &corpus[0];
    let m = RnntModel::init(ModelConfig::desk(), 0).unwrap();
    let none = FreezeMask::none();
    c.bench_function("desk loss_and_grad", |b| {
        b.iter(|| {
            m.loss_and_grad(black_box(&u.features), black_box(&u.transcript), &none)
                .unwrap()
        })
    });
    c.bench_function("desk greedy_decode", |b| {
        b.iter(|| m.greedy_decode(black_box(&u.features), 4).unwrap())
    });
}

fn tree(c: &mut Criterion) {
    let samples: Vec<GeoSample> = (0..2000)
        .map(|i| {
            let lon = -124.0 + ((i * 37) % 560) as f64 / 10.0;
            let lat = 26.0 + ((i * 53) % 220) as f64 / 10.0;
            GeoSample {
                utterance_id: format!("u{i}"),
                device_id: format!("d{}", i % 400),
                lon,
                lat,
                ref_words: 5,
                edit_errors: ((lon + 124.0) / 14.0) as usize % 5,
            }
        })
        .collect();
    c.bench_function("build_tree 2000 samples t=20", |b| {
        b.iter(|| build_tree(black_box(&samples), 20).unwrap())
    });
}

criterion_group!(benches, transducer, model, tree);
criterion_main!(benches);
