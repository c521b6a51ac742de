use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noteforge_core::dedup::{select_keyframes, DedupConfig};
use noteforge_core::fixture;
use noteforge_core::ingest::FrameRecord;
use noteforge_core::keyinfo::dynamic::{detect_dynamic_keyframes, DynamicConfig};
use noteforge_core::media::Raster;
use noteforge_core::par::{self, Exec};
use noteforge_core::providers::mock::MockTables;
use noteforge_core::providers::Providers;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut m = vec![("sequential", Exec::Sequential)];
    if Exec::available() == Exec::Parallel {
        m.push(("parallel", Exec::Parallel));
    }
    m
}

fn frames(n: usize) -> Vec<FrameRecord> {
    (0..n)
        .map(|i| {
            let shade = (i / 4 * 37 % 256) as u8;
            let img = fixture::pattern(256, 256, [shade, 80, 200 - shade / 2], [20, shade, 90], 6 + (i / 4) as u32 % 5);
            FrameRecord::new(i, i as f64, img)
        })
        .collect()
}

fn bench_dedup(c: &mut Criterion) {
    let providers = Providers::mock(MockTables::default(), 1);
    let frames = frames(256);
    let mut g = c.benchmark_group("select_keyframes");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| select_keyframes(&providers, black_box(&frames), &DedupConfig::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn bench_dynamic(c: &mut Criterion) {
    let providers = Providers::mock(MockTables::default(), 1);
    let frames = frames(64);
    let mut g = c.benchmark_group("dynamic_keyframes");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| detect_dynamic_keyframes(&providers, black_box(&frames), &DynamicConfig::default(), exec))
        });
    }
    g.finish();
}

fn bench_resize(c: &mut Criterion) {
    let images: Vec<Raster> = (0..32).map(|i| fixture::pattern(1024, 768, [i * 7, 50, 90], [200, i * 5, 30], 5)).collect();
    let mut g = c.benchmark_group("canonical_resize");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| par::map(exec, black_box(&images), |r| r.fit_within(512)))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_dedup, bench_dynamic, bench_resize);
criterion_main!(benches);
