use criterion::{black_box, criterion_group, criterion_main, Criterion};

use pgm_bench::{gradient_pair, translated_pair};
use pgm_core::interp::{densify, sparsify_to_grid, InterpolatorMode};
use pgm_core::matcher::{
    basic_gradient_matching, patch_distance, CorrespondenceField, MatchParams, Offset,
};
use pgm_core::pyramid_flow::{pyramidal_matching, PipelineConfig};

fn bench_patch_distance(c: &mut Criterion) {
    let (g1, g2) = gradient_pair(64, 48);
    c.bench_function("patch_distance r7 6ch", |b| {
        b.iter(|| {
            patch_distance(
                black_box(&g1),
                black_box(&g2),
                black_box((30, 20)),
                black_box((33, 22)),
                7,
            )
            .unwrap()
        })
    });
}

fn bench_basic_matching(c: &mut Criterion) {
    let (g1, g2) = gradient_pair(64, 48);
    let init = CorrespondenceField::constant(64, 48, Offset::ZERO);
    let params = MatchParams {
        radius: 7,
        search_bound: 2,
        iterations: 4,
        seed: 1,
    };
    c.bench_function("basic matching 64x48 4 sweeps", |b| {
        b.iter(|| basic_gradient_matching(black_box(&g1), black_box(&g2), &init, &params).unwrap())
    });
}

fn bench_pyramidal(c: &mut Criterion) {
    let pair = translated_pair(96, 72, (4.0, 3.0));
    let cfg = PipelineConfig::default();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("pyramidal matching 96x72", |b| {
        b.iter(|| pyramidal_matching(black_box(&pair.img1), black_box(&pair.img2), &cfg).unwrap())
    });
    group.finish();
}

fn bench_densify(c: &mut Criterion) {
    let field = CorrespondenceField::constant(128, 96, Offset::new(3, 2));
    let matches = sparsify_to_grid(&field, 3);
    c.bench_function("densify nw 128x96", |b| {
        b.iter(|| {
            densify(
                black_box(&matches),
                128,
                96,
                InterpolatorMode::NearestWeighted,
                25,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_patch_distance,
    bench_basic_matching,
    bench_pyramidal,
    bench_densify
);
criterion_main!(benches);
