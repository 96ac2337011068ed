use criterion::{criterion_group, criterion_main, Criterion};
use multipatch::eval::{nn_distance, PointCloud};
use multipatch::geometry::{depth_planes, DepthRange};
use multipatch::sweep::{build_cost_volume, box_filter_volume, Measure, SweepConfig, View};
use multipatch_bench::{network, random_batch, random_tensor, scene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn network_passes(c: &mut Criterion) {
    let net = network();
    let patch = random_tensor(&mut ChaCha8Rng::seed_from_u64(2), 32);
    c.bench_function("branch_forward_32", |b| b.iter(|| net.forward_branch(black_box(&patch)).unwrap()));
    let tile = random_tensor(&mut ChaCha8Rng::seed_from_u64(3), 128);
    c.bench_function("branch_forward_128", |b| b.iter(|| net.forward_branch(black_box(&tile)).unwrap()));
    let batch = random_batch(4, 16, 5);
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("backward_16x5", |b| b.iter(|| net.backward(black_box(&batch)).unwrap()));
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let scene = scene();
    let net = network();
    let (reference, partners) = (&scene.views[0], &scene.views[1..5]);
    let planes = depth_planes(&DepthRange::new(0.45, 1.0, 16).unwrap());
    let config = SweepConfig::default();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("zncc_5view_16planes", |b| {
        b.iter(|| build_cost_volume(reference, partners, &planes, &Measure::Zncc, &config).unwrap())
    });
    // One 128x128 tile cut from the centre, principal points shifted to match.
    let crop = |v: &View| {
        let mut camera = v.camera;
        camera.intrinsics.cx -= 50.0;
        camera.intrinsics.cy -= 50.0;
        View {
            image: v.image.crop(50, 50, 128, 128),
            camera,
        }
    };
    let tile_ref = crop(reference);
    let tile_partners: Vec<View> = partners.iter().map(crop).collect();
    g.bench_function("learned_5view_tile_1plane", |b| {
        b.iter(|| build_cost_volume(&tile_ref, &tile_partners, &[0.7], &Measure::LearnedMulti(&net), &config).unwrap())
    });
    let vol = build_cost_volume(reference, partners, &planes, &Measure::Zncc, &config).unwrap();
    g.bench_function("box_filter_16planes", |b| b.iter(|| box_filter_volume(black_box(&vol), 2)));
    g.finish();

    let cloud = PointCloud::from_depth_map(&scene.gt_depth, &reference.camera, None).unwrap();
    c.bench_function("nn_distance_self", |b| b.iter(|| nn_distance(black_box(&cloud), &cloud).unwrap()));
}

criterion_group!(benches, network_passes, sweeps);
criterion_main!(benches);
