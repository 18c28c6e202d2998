use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graspkit::avh::{random_avh, AvhDims};
use graspkit::camera::{GridMap, Intrinsics};
use graspkit::fas::{detect, DetectConfig};
use graspkit::geometry::OrientationTable;
use graspkit::par::Execution;
use graspkit::scenegen::{render_depth, SyntheticScene};

fn detect_paths(c: &mut Criterion) {
    let intr = Intrinsics::default();
    let table = OrientationTable::default();
    let grid = GridMap::for_intrinsics(4, &intr).unwrap();
    let scene = SyntheticScene::random(7, 6, &intr).unwrap();
    let depth = render_depth(&scene, &intr, Execution::Parallel).unwrap();
    let avh = random_avh(AvhDims::new(&table, &grid), 7, 0.01).unwrap();

    let mut group = c.benchmark_group("detect");
    group.sample_size(10);
    for (name, execution) in [
        ("parallel", Execution::Parallel),
        ("sequential", Execution::Sequential),
    ] {
        let cfg = DetectConfig {
            execution,
            ..DetectConfig::default()
        };
        group.bench_function(BenchmarkId::new("indexed", name), |b| {
            b.iter(|| detect(&avh, &depth, &intr, &grid, &table, &cfg).unwrap())
        });
    }
    for cell in [0.01, 0.02, 0.04] {
        let cfg = DetectConfig {
            cell_size: Some(cell),
            ..DetectConfig::default()
        };
        group.bench_function(BenchmarkId::new("cell", cell), |b| {
            b.iter(|| detect(&avh, &depth, &intr, &grid, &table, &cfg).unwrap())
        });
    }
    // Exhaustive per-pose scanning is slow; a small candidate budget keeps
    // the comparison affordable.
    for (name, brute_force) in [("indexed", false), ("brute_force", true)] {
        let cfg = DetectConfig {
            brute_force,
            top_k: 64,
            ..DetectConfig::default()
        };
        group.bench_function(BenchmarkId::new("top64", name), |b| {
            b.iter(|| detect(&avh, &depth, &intr, &grid, &table, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, detect_paths);
criterion_main!(benches);
