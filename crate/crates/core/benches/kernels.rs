//! Sequential versus data-parallel hot paths.
//!
//! `sequential` pins the calling thread to the plain-loop fallback;
//! `parallel` uses one worker per hardware thread. Build with
//! `--no-default-features` to compile the fallback only.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gmmscape::fit::{e_step, em_iteration, fit_with, m_step_hard, kinit_labels, gbms_estimate_components, EmParams, GbmsParams};
use gmmscape::occupancy::{GridParams, OccupancyGrid3D};
use gmmscape::{inference, ingest, par, synth, CholeskyCache, Gmm4, PointCloud4D, RigidTransform};
use std::hint::black_box;

fn modes() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", par::hardware_threads())]
}

fn frame_cloud(w: usize, h: usize) -> PointCloud4D {
    let f = synth::render_frame(w, h, &RigidTransform::identity());
    ingest::image_pair_to_cloud(&f.depth, &f.intensity, &f.intrinsics).unwrap()
}

fn initial_model(cloud: &PointCloud4D, bandwidth: f64) -> Gmm4 {
    let g = gbms_estimate_components(cloud, &GbmsParams::new(bandwidth).unwrap()).unwrap();
    let labels = kinit_labels(cloud.points(), g.components(), 0).unwrap();
    m_step_hard(cloud.points(), &labels, g.components(), 1e-6).unwrap()
}

fn bench_e_step(c: &mut Criterion) {
    let cloud = synth::noisy_planes(20_000, 1);
    let model = initial_model(&cloud, 0.1);
    let cache = CholeskyCache::new(&model).unwrap();
    let mut g = c.benchmark_group("e_step_dense");
    g.throughput(Throughput::Elements((cloud.len() * model.len()) as u64));
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::new(name, model.len()), |b| {
            b.iter(|| par::with_threads(threads, || black_box(e_step(&cloud, &model, &cache).unwrap())))
        });
    }
    g.finish();
}

fn bench_em_iteration(c: &mut Criterion) {
    let cloud = frame_cloud(160, 120);
    let model = initial_model(&cloud, 0.03);
    let mut g = c.benchmark_group("em_iteration_sparse");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(BenchmarkId::new(name, model.len()), |b| {
            b.iter(|| par::with_threads(threads, || black_box(em_iteration(cloud.points(), &model, 1e-6).unwrap())))
        });
    }
    g.finish();
}

fn bench_fit(c: &mut Criterion) {
    let cloud = frame_cloud(80, 60);
    let params = EmParams { max_iters: 10, ..EmParams::default() };
    let gbms = GbmsParams::new(0.03).unwrap();
    let mut g = c.benchmark_group("fit_80x60");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_function(name, |b| b.iter(|| par::with_threads(threads, || black_box(fit_with(&cloud, &gbms, &params).unwrap()))));
    }
    g.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let cloud = frame_cloud(160, 120);
    let model = initial_model(&cloud, 0.05);
    let mut g = c.benchmark_group("joint_dist_sample");
    g.throughput(Throughput::Elements(100_000));
    for (name, threads) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| par::with_threads(threads, || black_box(inference::joint_dist_sample(&model, 100_000, 7).unwrap())))
        });
    }
    g.finish();
}

fn bench_occupancy(c: &mut Criterion) {
    let cloud = frame_cloud(160, 120);
    let model = initial_model(&cloud, 0.05);
    let params = GridParams { resolution: 0.05, origin: [-2.5, -1.5, -2.0], dims: [100, 60, 130], ..GridParams::default() };
    let pose = RigidTransform::identity();
    let mut g = c.benchmark_group("occupancy_insert");
    g.sample_size(10);
    g.throughput(Throughput::Elements(50_000));
    for (name, threads) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    let mut grid = OccupancyGrid3D::new(params).unwrap();
                    grid.insert_resampled_model(&model, &pose, 50_000, 6.0, 3).unwrap();
                    black_box(grid)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_e_step, bench_em_iteration, bench_fit, bench_sampling, bench_occupancy);
criterion_main!(benches);
