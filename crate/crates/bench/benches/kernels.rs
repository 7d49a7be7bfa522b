use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use softsplat_bench::sphere_scene;
use softsplat_core::geometry::knn_with;
use softsplat_core::metrics::chamfer_with;
use softsplat_core::projection::{rasterize_hard, splat_backward_with, splat_forward_with, HardMode};
use softsplat_core::{Exec, FeatureGrid, GridSemantics, SplatConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn splat(c: &mut Criterion) {
    let (cloud, cam) = sphere_scene(4096, 128);
    let feats = cloud.ccm_colors();
    let cfg = SplatConfig::default();
    let mut group = c.benchmark_group("splat_forward");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| splat_forward_with(&cloud, &feats, &cam, &cfg, exec).unwrap())
        });
    }
    group.finish();

    let (grid, aux) = splat_forward_with(&cloud, &feats, &cam, &cfg, Exec::Parallel).unwrap();
    let up = FeatureGrid::from_data(
        grid.height(),
        grid.width(),
        3,
        vec![1.0; grid.as_slice().len()],
        GridSemantics::Generic,
    )
    .unwrap();
    let mut group = c.benchmark_group("splat_backward");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| splat_backward_with(&aux, &cloud, &feats, &up, exec, false).unwrap())
        });
    }
    group.finish();

    c.bench_function("rasterize_hard", |b| {
        b.iter(|| rasterize_hard(&cloud, &cam, HardMode::Ccm).unwrap())
    });
}

fn neighbors(c: &mut Criterion) {
    let (x, _) = sphere_scene(2048, 8);
    let (y, _) = sphere_scene(1024, 8);
    let mut group = c.benchmark_group("chamfer_with_grad");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| chamfer_with(&x, &y, true, exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("knn_k16");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| knn_with(&x, 16, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, splat, neighbors);
criterion_main!(benches);
