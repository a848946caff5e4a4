use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cortexforge_core::deform::{energy_gradient, DeformConfig};
use cortexforge_core::mesh::shapes::icosphere;
use cortexforge_core::mesh::{self_intersections, tessellate, vertex_frames};
use cortexforge_core::metrics::surface_distance;
use cortexforge_core::sdf::mesh_to_sdf;
use cortexforge_core::{GridGeometry, ScalarVolume};

fn sphere_sdf(n: usize, r: f64) -> ScalarVolume {
    let grid = GridGeometry::centered([n; 3], 1.0).unwrap();
    ScalarVolume::from_fn(grid, move |p| p.coords.norm() - r)
}

fn sdf_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("mesh_to_sdf");
    group.sample_size(10);
    for level in [3, 4] {
        let mesh = icosphere(level, 12.0);
        let grid = GridGeometry::centered([40; 3], 1.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(mesh.triangle_count()), &mesh, |b, m| {
            b.iter(|| mesh_to_sdf(black_box(m), &grid).unwrap())
        });
    }
    group.finish();
}

fn intersections(c: &mut Criterion) {
    let mut group = c.benchmark_group("self_intersections");
    for level in [4, 5] {
        let mesh = icosphere(level, 12.0);
        group.bench_with_input(BenchmarkId::from_parameter(mesh.triangle_count()), &mesh, |b, m| {
            b.iter(|| self_intersections(black_box(m)))
        });
    }
    group.finish();
}

fn tessellation(c: &mut Criterion) {
    let mask = sphere_sdf(64, 20.0).map(|d| u16::from(d < 0.0));
    c.bench_function("tessellate_64", |b| b.iter(|| tessellate(black_box(&mask)).unwrap()));
}

fn deformation(c: &mut Criterion) {
    let sdf = sphere_sdf(48, 12.0);
    let mesh = icosphere(5, 14.0);
    let frames = vertex_frames(&mesh).unwrap();
    let cfg = DeformConfig::default();
    c.bench_function("energy_gradient_icosphere5", |b| {
        b.iter(|| energy_gradient(black_box(&mesh), &sdf, &frames, &cfg).unwrap())
    });
}

fn distances(c: &mut Criterion) {
    let a = icosphere(5, 12.0);
    let b = icosphere(4, 12.5);
    c.bench_function("surface_distance", |bench| {
        bench.iter(|| surface_distance(black_box(&a), &b).unwrap())
    });
}

criterion_group!(
    benches,
    sdf_generation,
    intersections,
    tessellation,
    deformation,
    distances
);
criterion_main!(benches);
