use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use planocheck_bench::shelf_scene;
use planocheck_core::geom::{Point, Rect};
use planocheck_core::partition::{PartitionConfig, SearchRegion};
use planocheck_core::pattern::{detect, GraspConfig};
use planocheck_core::pipeline::{run_check, PipelineConfig};
use planocheck_core::spectral::match_sets;

fn bench_detect(c: &mut Criterion) {
    let mut group = c.benchmark_group("detect");
    group.sample_size(10);
    for per_row in [5usize, 13] {
        let (_, scene) = shelf_scene(1, per_row, 7);
        let region = SearchRegion {
            type_id: "SKU".into(),
            rect: Rect::new(0.0, 0.0, scene.width as f64, scene.height as f64),
            expected_count: per_row,
            region_index: 0,
            slots: Vec::new(),
        };
        let cfg = GraspConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(per_row), &per_row, |b, _| {
            b.iter(|| detect(&region, &scene, &cfg));
        });
    }
    group.finish();
}

fn bench_spectral(c: &mut Criterion) {
    let n = 20usize;
    let p: Vec<Point> = (0..n)
        .map(|i| Point::new((i % 5) as f64 / 4.0, (i / 5) as f64 / 3.0))
        .collect();
    c.bench_function("spectral_match_20x20", |b| {
        b.iter(|| match_sets(&p, &p, 300.0, 400.0).unwrap());
    });
}

fn bench_end_to_end(c: &mut Criterion) {
    let (planogram, scene) = shelf_scene(3, 13, 11);
    let cfg = PipelineConfig {
        partition: PartitionConfig { max_per_region: 25, margin_frac: 0.05 },
        ..PipelineConfig::default()
    };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("check_39_products", |b| {
        b.iter(|| run_check(&planogram, &scene, &cfg).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_detect, bench_spectral, bench_end_to_end);
criterion_main!(benches);
